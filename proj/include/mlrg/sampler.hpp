#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "mlrg/lattice.hpp"
#include "mlrg/moments.hpp"
#include "mlrg/types.hpp"

namespace mlrg {

using Rng = std::mt19937_64;

enum class ChainInit {
  /// all-up when alpha_1 > 2/2.269 (below the Ising critical temperature), random otherwise
  automatic,
  all_up,
  random,
};

struct MCSettings {
  /// Total sweeps per chain, burn-in included. One sweep = L^2 proposals.
  int sweeps = 10000;
  /// Discarded sweeps; negative means 10% of `sweeps`.
  int burn_in = -1;
  int chains = 4;
  std::uint64_t seed = 1;
  int measure_every = 1;
  ChainInit init = ChainInit::automatic;
  /// Batch-means batches per chain for the standard error.
  int batches = 50;
  /// Worker threads for the chains; 0 uses the hardware concurrency.
  int threads = 0;

  int effective_burn_in() const { return burn_in < 0 ? sweeps / 10 : burn_in; }
  /// Throws ConfigError when the invariants do not hold.
  void validate() const;
};

/// Metropolis state for one chain: the lattice plus cached group-2 and
/// group-3 sums, which make a proposal O(1) with small constants.
class MetropolisChain {
 public:
  explicit MetropolisChain(SpinLattice lattice);

  struct Tables {
    Vector8 alpha;
    // Quartic energy change contributed by one nearest (resp. diagonal)
    // neighbor J of the flipped spin x, indexed [x>0][S2(J)+4][S3(J)+4].
    double nearest[2][9][9];
    double diagonal[2][9][9];
    bool quartic = false;
  };

  const SpinLattice& lattice() const { return lattice_; }

  /// Sets a spin outside of the dynamics (e.g. clamping) and refreshes the caches.
  void set(int site, Spin value);

  static Tables prepare(const Vector8& alpha);

  /// H(x with `site` flipped) - H(x); `tables` must come from prepare(alpha).
  double delta(int site, const Tables& tables) const;

  /// Raster sweep over `sites`; returns accepted flips. Throws NumericalError
  /// on a non-finite energy change.
  int sweep(const Tables& tables, Rng& rng, std::span<const int> sites);
  int sweep(const Tables& tables, Rng& rng);

 private:
  void flip(int site);

  SpinLattice lattice_;
  std::vector<std::int8_t> sum2_;
  std::vector<std::int8_t> sum3_;
};

/// One raster-order Metropolis sweep targeting exp(-<alpha, psi>). Returns the
/// number of accepted flips. Throws NumericalError on a non-finite energy change.
int metropolis_sweep(SpinLattice& lat, const Vector8& alpha, Rng& rng);

/// Sweep restricted to `free_sites` (in the given order).
int metropolis_sweep(SpinLattice& lat, const Vector8& alpha, Rng& rng, std::span<const int> free_sites);

/// Moments of psi under alpha on an L x L lattice.
MomentStats estimate_moments(const Vector8& alpha, int side, const MCSettings& settings);

/// Moments of psi on the lattice obtained by majority-blocking each sample
/// `levels` times; the coarse side is side / 2^levels.
MomentStats blocked_moments(const Vector8& alpha, int side, const MCSettings& settings, int levels = 1);

/// Spins held fixed during conditional sampling.
struct Clamp {
  std::vector<std::pair<int, Spin>> sites;
};

struct ScalarEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

using Observable = std::function<double(const SpinLattice&)>;

/// E[h(x) | clamped spins] by Metropolis over the free sites only.
ScalarEstimate conditional_expectation(const Vector8& alpha, int side, const Clamp& clamp, const Observable& h,
                                       const MCSettings& settings);

/// `count` configurations for a sample file. Chain c (of settings.chains)
/// supplies samples [c*count/chains, (c+1)*count/chains): after the burn-in it
/// records the lattice every `thin` sweeps. settings.sweeps is not used.
std::vector<SpinLattice> draw_configurations(const Vector8& alpha, int side, int count, int thin,
                                             const MCSettings& settings);

/// Metropolis acceptance probability min(1, exp(-delta_h)).
inline double acceptance_probability(double delta_h) { return delta_h <= 0.0 ? 1.0 : std::exp(-delta_h); }

}  // namespace mlrg
