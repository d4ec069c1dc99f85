// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace slimrnn {

/// Violated precondition: mismatched shapes, out-of-range hyperparameters,
/// malformed requests.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A NaN or infinity appeared during evaluation.
class NumericFault : public std::runtime_error {
 public:
  NumericFault(const std::string& what, std::size_t timestep)
      : std::runtime_error(what + " (timestep " + std::to_string(timestep) + ")"),
        timestep_(timestep) {}

  std::size_t timestep() const noexcept { return timestep_; }

 private:
  std::size_t timestep_;
};

/// Config file could not be parsed or failed validation.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint I/O failure. `version_mismatch` distinguishes a readable file
/// written by another format version from a damaged one.
class PersistenceError : public std::runtime_error {
 public:
  explicit PersistenceError(const std::string& what, bool version_mismatch = false)
      : std::runtime_error(what), version_mismatch_(version_mismatch) {}

  bool version_mismatch() const noexcept { return version_mismatch_; }

 private:
  bool version_mismatch_;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

}  // namespace slimrnn
