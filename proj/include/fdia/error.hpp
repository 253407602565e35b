#pragma once

#include <stdexcept>
#include <string>

namespace fdia {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
  public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

class ValidationError : public Error {
  public:
    using Error::Error;
};

class DimensionError : public Error {
  public:
    using Error::Error;
};

/// Gain matrix or power-flow Jacobian could not be factorized.
class ObservabilityError : public ValidationError {
  public:
    using ValidationError::ValidationError;
};

class ConvergenceError : public Error {
  public:
    ConvergenceError(const std::string& what, double last_mismatch)
        : Error(what), last_mismatch_(last_mismatch) {}
    double last_mismatch() const noexcept { return last_mismatch_; }

  private:
    double last_mismatch_;
};

/// NaN/Inf or overflow detected in a numerical routine.
class NumericalError : public Error {
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

inline void require_dim(bool ok, const char* what) {
    if (!ok) throw DimensionError(what);
}

}  // namespace fdia
