// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fdm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, shape mismatch, or unusable input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the domain of the operation (e.g. t outside [0,1]).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A loss or state became non-finite or exceeded the divergence guard.
class NumericalDivergence : public Error {
 public:
  using Error::Error;
};

/// Malformed text input; carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace fdm
