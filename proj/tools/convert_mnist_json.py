#!/usr/bin/env python3
"""Convert the digit JSON files of the npm `mnist` package into gzipped IDX files.

usage: convert_mnist_json.py <package>/src/digits <out_dir>
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path


def main(src: Path, out: Path) -> None:
    images, labels = [], []
    for digit in range(10):
        flat = json.loads((src / f"{digit}.json").read_text())["data"]
        for i in range(len(flat) // 784):
            px = flat[i * 784:(i + 1) * 784]
            images.append(bytes(min(255, max(0, round(v * 255))) for v in px))
            labels.append(digit)
    order = list(range(len(images)))
    random.Random(20240101).shuffle(order)
    out.mkdir(parents=True, exist_ok=True)
    with gzip.GzipFile(out / "digits-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, len(order), 28, 28))
        for i in order:
            f.write(images[i])
    with gzip.GzipFile(out / "digits-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, len(order)))
        f.write(bytes(labels[i] for i in order))


if __name__ == "__main__":
    main(Path(sys.argv[1]), Path(sys.argv[2]))
