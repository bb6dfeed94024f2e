#pragma once

#include <stdexcept>
#include <string>

namespace auxcal {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Arguments violate a documented precondition (non-finite logits, bad shapes).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Malformed dataset or model file. `line` is 1-based, 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A calibrator could not be fitted on the given data.
class FitError : public Error {
 public:
  using Error::Error;
};

// Optimization diverged (non-finite loss).
class TrainingError : public Error {
 public:
  using Error::Error;
};

// A fitted model is structurally invalid or of the wrong kind.
class ModelError : public Error {
 public:
  using Error::Error;
};

// A metric is undefined for the given outcomes (e.g. AUROC with one class).
class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

}  // namespace auxcal
