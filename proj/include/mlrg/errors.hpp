#pragma once

#include <stdexcept>
#include <string>

namespace mlrg {

/// Invalid input or configuration (bad lattice size, out-of-range group, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Sampler or solver hit a numerical dead end (non-finite energies, no bracket).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable/unwritable or malformed files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mlrg
