#pragma once

#include <stdexcept>
#include <string>

namespace fairaug {

// Malformed or inconsistent configuration (CLI exit code 1).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data problems: missing columns, bad rows, empty corpora (exit code 2).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Schema mismatch between a file and its column mapping.
class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

// Row-level parse failure; carries the 1-based line number.
class RowError : public DataError {
 public:
  RowError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Non-finite values, divergence, non-convergence (exit code 3).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated API contract (e.g. adding an edge that already exists).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace fairaug
