#pragma once

#include <stdexcept>
#include <string>

namespace advbench {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape mismatch, out-of-range label, bad argument.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Malformed file (IDX, model file, JSON record).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Run configuration rejected during validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A rate whose denominator is zero (e.g. no correctly classified input).
class UndefinedRate : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// Raised by a QueryOracle when its query cap has been reached.
class BudgetExhausted : public Error {
 public:
  using Error::Error;
};

/// A computation produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace advbench
