// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace hydro {

/// Root of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or precondition violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Input outside the mathematical domain of an operation (non-finite values,
/// points outside the ball, negative weights).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent dataset / artifact on disk.
class IngestionError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Optimization diverged (non-finite loss or gradient).
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace hydro
