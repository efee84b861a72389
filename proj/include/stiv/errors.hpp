#pragma once

#include <stdexcept>
#include <string>

namespace stiv {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (CSV cells, JSON files).
class ParseError : public Error {
public:
  ParseError(const std::string& msg, long row = -1, long col = -1)
      : Error(msg), row_(row), col_(col) {}
  long row() const { return row_; }
  long column() const { return col_; }

private:
  long row_;
  long col_;
};

class ValidationError : public Error {
public:
  using Error::Error;
};

class DimensionError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

// Zero columns, zero fitted instruments, L = 1 in the practical rate.
class DegenerateError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class EnumerationCapError : public ConfigError {
public:
  using ConfigError::ConfigError;
};

class SolverError : public Error {
public:
  using Error::Error;
};

} // namespace stiv
