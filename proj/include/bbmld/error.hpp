// SPDX-FileCopyrightText: 2026 bbmld contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace bbmld {

/// Argument outside the mathematical domain of an operation
/// (gamma beyond the exponential-moment interval, c <= W for the
/// intermediate amplitude, ...).
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

/// Iterative solver, bracketing or fit failed to meet its contract.
class ConvergenceError : public std::runtime_error {
 public:
  explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid model definition or run configuration.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace bbmld
