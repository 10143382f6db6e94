#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace utell {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
  using Error::Error;
};

class SymmetryError : public Error {
public:
  using Error::Error;
};

class ConvergenceError : public Error {
public:
  using Error::Error;
};

class EmptyInputError : public Error {
public:
  using Error::Error;
};

class DegenerateClusterError : public Error {
public:
  using Error::Error;
};

class FrozenExpertError : public Error {
public:
  using Error::Error;
};

class UnknownTaskError : public Error {
public:
  using Error::Error;
};

class FormatError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class InsufficientSamplesError : public Error {
public:
  using Error::Error;
};

/// Loss became non-finite during optimisation.
class TrainingError : public Error {
public:
  TrainingError(std::size_t epoch, const std::string& what)
      : Error("training diverged at epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}

  std::size_t epoch() const noexcept { return epoch_; }

private:
  std::size_t epoch_;
};

/// Wraps a module error with the index of the task being processed.
class TaskError : public Error {
public:
  TaskError(std::size_t task_id, const std::string& what)
      : Error("task " + std::to_string(task_id) + ": " + what), task_id_(task_id) {}

  std::size_t task_id() const noexcept { return task_id_; }

private:
  std::size_t task_id_;
};

}  // namespace utell
