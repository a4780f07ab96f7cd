#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "mlrg/lattice.hpp"
#include "mlrg/moments.hpp"
#include "mlrg/sampler.hpp"
#include "mlrg/types.hpp"

namespace mlrg {

/// Exact moments of exp(-<alpha, psi>) / Z over all 2^(L^2) configurations.
struct ExactResult {
  double log_z = 0.0;
  Vector8 mean = Vector8::Zero();
  Matrix8 second = Matrix8::Zero();
  Matrix8 cov = Matrix8::Zero();

  /// View as zero-error moment statistics (for the solver's provider interface).
  MomentStats as_stats() const;
};

/// Full enumeration of a tiny lattice (side 2..4). The potentials of every
/// configuration are tabulated once; each alpha then costs one weighted pass.
/// Configuration index bit i is the spin at row-major site i (1 -> +1).
class ExactEnumerator {
 public:
  static constexpr int kMaxSide = 4;

  explicit ExactEnumerator(int side);

  /// Shared cached instance per side.
  static std::shared_ptr<const ExactEnumerator> for_side(int side);

  int side() const { return side_; }
  std::uint64_t configurations() const { return std::uint64_t{1} << (side_ * side_); }
  SpinLattice configuration(std::uint64_t index) const;

  ExactResult moments(const Vector8& alpha) const;

  /// Weighted average of psi over the majority-blocked configurations.
  Vector8 blocked_moments(const Vector8& alpha) const;

 private:
  /// Normalized Boltzmann weights and log Z.
  std::pair<std::vector<double>, double> weights(const Vector8& alpha) const;

  int side_;
  std::vector<Vector8> psi_;
  std::vector<Vector8> coarse_psi_;
};

/// Exact moments; sides above 4 are refused (cost 2^(L^2)).
ExactResult exact_moments(const Vector8& alpha, int side);

/// Exact blocked moments on the 2x2 coarse lattice; side must be 4.
Vector8 exact_blocked_moments(const Vector8& alpha, int side);

/// Exact E[h | clamp] by enumerating the free spins (at most 20 of them).
double exact_conditional(const Vector8& alpha, int side, const Clamp& clamp, const Observable& h);

/// Residual f = E_alpha[psi] - target and Jacobian J = -cov(psi).
std::pair<Vector8, Matrix8> exact_residual_jacobian(const Vector8& alpha, const Vector8& target, int side);

}  // namespace mlrg
