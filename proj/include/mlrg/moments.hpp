#pragma once

#include <cstdint>

#include "mlrg/types.hpp"

namespace mlrg {

/// Estimates of E[psi], E[psi psi^T] and their uncertainty. Exact providers
/// leave std_error and mean_cov at zero.
struct MomentStats {
  Vector8 mean = Vector8::Zero();
  Matrix8 second = Matrix8::Zero();
  /// second - mean mean^T; the Jacobian of the residual is -cov.
  Matrix8 cov = Matrix8::Zero();
  /// Standard error of each component of `mean`.
  Vector8 std_error = Vector8::Zero();
  /// Covariance of the estimator `mean` (diagonal equals std_error^2).
  Matrix8 mean_cov = Matrix8::Zero();
  /// Derivative of `mean` with respect to the couplings of the sampled
  /// density: -Cov(measured psi, psi of the sampled lattice). Equals -cov when
  /// the sampled lattice itself is measured; for blocked estimates it is the
  /// response of the coarse moments to the fine couplings.
  Matrix8 mean_response = Matrix8::Zero();
  std::int64_t n_samples = 0;
};

/// splitmix64 finalizer; the counter scheme for all subordinate seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for stream `index` under `parent`: mix(parent ^ mix(index)).
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
  return mix_seed(parent ^ mix_seed(index));
}

}  // namespace mlrg
