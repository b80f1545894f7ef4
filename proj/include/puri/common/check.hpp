#pragma once

#include <stdexcept>
#include <string>

namespace puri {

// Violation of a documented precondition or invariant.
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// A file could not be read or decoded.
struct DecodeError : std::runtime_error {
  explicit DecodeError(const std::string& msg) : std::runtime_error(msg) {}
};

// A required capability (model interface, adapter, registry entry) is missing.
struct CapabilityError : std::runtime_error {
  explicit CapabilityError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical computation left its valid regime (NaN gradients, indefinite
// covariance beyond tolerance, ...).
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace puri

#define PURI_CHECK(cond, msg)                      \
  do {                                             \
    if (!(cond)) throw ::puri::ContractError(msg); \
  } while (0)
