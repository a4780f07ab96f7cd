#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mlrg/lattice.hpp"
#include "mlrg/sampler.hpp"
#include "mlrg/types.hpp"

namespace mlrg::test {

inline SpinLattice random_lattice(int side, std::uint64_t seed) {
  return SpinLattice(side, LatticeInit::random, seed);
}

/// Entries uniform in [lo, hi].
inline Vector8 random_alpha(std::mt19937_64& rng, double lo = -0.5, double hi = 0.5) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector8 a;
  for (int k = 0; k < kNumPotentials; ++k) a(k) = u(rng);
  return a;
}

/// Potentials straight from their definition: groups are found by squared
/// distance over the 5x5 box, without the library's offset tables.
inline Vector8 naive_basis(const SpinLattice& lat) {
  const int L = lat.side();
  auto group_of = [](int d2) {
    switch (d2) {
      case 0: return 1;
      case 1: return 2;
      case 2: return 3;
      case 4: return 4;
      case 5: return 5;
      case 8: return 6;
      default: return 0;
    }
  };
  Vector8 psi = Vector8::Zero();
  for (int r = 0; r < L; ++r) {
    for (int c = 0; c < L; ++c) {
      double sum[7] = {0, 0, 0, 0, 0, 0, 0};
      double count[7] = {0, 0, 0, 0, 0, 0, 0};
      for (int dr = -2; dr <= 2; ++dr) {
        for (int dc = -2; dc <= 2; ++dc) {
          const int g = group_of(dr * dr + dc * dc);
          if (g == 0) continue;
          sum[g] += lat.at(r + dr, c + dc);
          count[g] += 1;
        }
      }
      double X[7];
      for (int g = 1; g <= 6; ++g) X[g] = sum[g] / count[g];
      for (int k = 1; k <= 5; ++k) psi(k - 1) -= X[1] * X[k + 1];
      psi(5) -= X[2] * X[2] * X[2] * X[2];
      psi(6) -= X[3] * X[3] * X[3] * X[3];
      psi(7) -= X[2] * X[2] * X[3] * X[3];
    }
  }
  return psi;
}

/// Small, fast Monte Carlo settings for unit tests.
inline MCSettings quick_mc(int sweeps, std::uint64_t seed, int chains = 4) {
  MCSettings s;
  s.sweeps = sweeps;
  s.chains = chains;
  s.seed = seed;
  s.threads = 1;
  return s;
}

}  // namespace mlrg::test
