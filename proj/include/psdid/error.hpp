#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace psdid {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Caller violated a documented precondition (bad sizes, bad config values).
class UsageError : public Error {
public:
  using Error::Error;
};

/// Input outside the mathematical domain of an operation (zero vector, ...).
class DomainError : public Error {
public:
  using Error::Error;
};

/// Floating point breakdown: failed factorization, NaN, loss of rank.
class NumericalError : public Error {
public:
  using Error::Error;
};

/// Malformed input file. Carries the 1-based line number, 0 when unknown.
class ParseError : public Error {
public:
  ParseError(const std::string &what, std::size_t line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

  /// Same error with `prefix: ` prepended to the message (e.g. a file name).
  ParseError with_context(const std::string &prefix) const {
    return ParseError(prefix + ": " + what(), line_, raw_tag{});
  }

private:
  struct raw_tag {};
  ParseError(const std::string &msg, std::size_t line, raw_tag)
      : Error(msg), line_(line) {}

  std::size_t line_;
};

} // namespace psdid
