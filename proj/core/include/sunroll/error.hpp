#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sunroll {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A vector or matrix argument does not have the expected size.
class DimensionError : public Error {
 public:
  DimensionError(const std::string& what, std::size_t expected, std::size_t actual)
      : Error(what + ": expected length " + std::to_string(expected) + ", got " +
              std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}
  explicit DimensionError(const std::string& what) : Error(what) {}

  std::size_t expected() const { return expected_; }
  std::size_t actual() const { return actual_; }

 private:
  std::size_t expected_ = 0;
  std::size_t actual_ = 0;
};

// A linear system that must be solved is numerically rank deficient.
class SingularSystemError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf appeared where a finite value is required.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Training loss became non-finite; sample_index names the offending sample.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, std::size_t sample_index)
      : NumericalError(what + " (sample " + std::to_string(sample_index) + ")"),
        sample_index_(sample_index) {}
  std::size_t sample_index() const { return sample_index_; }

 private:
  std::size_t sample_index_;
};

// Invalid argument that is not a size mismatch (negative sigma, T = 0, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// The requested analysis is not defined for this architecture or size.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

// Binary container problems. Each failure mode has its own type.
class FormatError : public Error {
 public:
  using Error::Error;
};
class HeaderError : public FormatError {
 public:
  using FormatError::FormatError;
};
class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};
class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Config parse/validation failure. field() is the dotted key path.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, int line, const std::string& message)
      : Error(format(field, line, message)), field_(field), line_(line) {}

  const std::string& field() const { return field_; }
  int line() const { return line_; }

 private:
  static std::string format(const std::string& field, int line, const std::string& message) {
    std::string out = "config error";
    if (line > 0) out += " (line " + std::to_string(line) + ")";
    if (!field.empty()) out += " at '" + field + "'";
    return out + ": " + message;
  }

  std::string field_;
  int line_ = 0;
};

// Every learning rate in a training run diverged. Carries the loss histories.
class TrainingFailure : public Error {
 public:
  TrainingFailure(const std::string& what, std::vector<std::vector<double>> histories)
      : Error(what), histories_(std::move(histories)) {}

  const std::vector<std::vector<double>>& histories() const { return histories_; }

 private:
  std::vector<std::vector<double>> histories_;
};

}  // namespace sunroll
