#pragma once

#include <stdexcept>
#include <string>

namespace mlcomp {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed TIR text. Carries a 1-based source position.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, int line, int column)
      : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " +
              message),
        line_(line),
        column_(column) {}

  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

/// Structurally invalid module (bad arity, undefined target, use before def...).
class VerifyError : public Error {
 public:
  using Error::Error;
};

/// Malformed data file (platform, dataset, bundle, policy, config).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Persisted artifact written by an incompatible manifest or registry.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace mlcomp
