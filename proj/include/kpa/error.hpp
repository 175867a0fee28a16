#pragma once

#include <stdexcept>
#include <string>

namespace kpa {

// Base for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input files (bad JSON, unknown enum strings, ...).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Violated invariants and preconditions on otherwise well-formed data.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Bad or inconsistent run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Answer generator failures (endpoint errors, empty output).
class GenerationError : public Error {
 public:
  using Error::Error;
};

// Non-recoverable runtime failures (non-finite losses, I/O mid-run).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace kpa
