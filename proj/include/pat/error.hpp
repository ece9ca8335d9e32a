#pragma once

#include <stdexcept>
#include <string>

namespace pat {

// Base of every error raised by the library. Each subclass maps to one
// failure family so callers (the CLI in particular) can choose exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or extent disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Caller violated an operation precondition (non-scalar loss, empty mask, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Inconsistent or invalid configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Out-of-range token or answer lookup.
class LookupError : public Error {
 public:
  using Error::Error;
};

// Malformed text input; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Malformed binary input (bad magic, truncation, bad version).
class FormatError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced or consumed where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// File system failures (missing file, unwritable directory).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace pat
