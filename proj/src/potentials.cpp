#include "mlrg/potentials.hpp"

#include <array>

namespace mlrg {

namespace {

// (s/4)^2 and (s/4)^4 for integer group sums s in [-4, 4] of 4-site groups.
constexpr std::array<double, 9> kSquare = {1.0, 0.5625, 0.25, 0.0625, 0.0, 0.0625, 0.25, 0.5625, 1.0};
constexpr std::array<double, 9> kFourth = {1.0, 0.31640625, 0.0625, 0.00390625, 0.0,
                                           0.00390625, 0.0625, 0.31640625, 1.0};

inline double sq(int s) { return kSquare[static_cast<std::size_t>(s + 4)]; }
inline double fourth(int s) { return kFourth[static_cast<std::size_t>(s + 4)]; }

inline int sum_range(const SpinLattice& lat, const int* row, int begin, int end) {
  int s = 0;
  for (int e = begin; e < end; ++e) s += lat[row[e]];
  return s;
}

}  // namespace

Vector8 evaluate_basis(const SpinLattice& lat) {
  constexpr auto& b = NeighborTable::kGroupBegin;
  const NeighborTable& table = lat.neighbors();
  // Integer accumulation of the pair sums keeps the result exact.
  std::array<long, kNumQuadratic> pair{};
  double q6 = 0.0, q7 = 0.0, q8 = 0.0;
  for (int j = 0; j < lat.size(); ++j) {
    const int* row = table.row(j);
    const int x = lat[j];
    std::array<int, kNumQuadratic> s{};
    for (int g = 0; g < kNumQuadratic; ++g) s[g] = sum_range(lat, row, b[g + 1], b[g + 2]);
    for (int g = 0; g < kNumQuadratic; ++g) pair[g] += x * s[g];
    q6 += fourth(s[0]);
    q7 += fourth(s[1]);
    q8 += sq(s[0]) * sq(s[1]);
  }
  Vector8 psi;
  for (int g = 0; g < kNumQuadratic; ++g) {
    psi(g) = -static_cast<double>(pair[g]) / kGroupSizes[static_cast<std::size_t>(g + 1)];
  }
  psi(5) = -q6;
  psi(6) = -q7;
  psi(7) = -q8;
  return psi;
}

Vector8 local_basis_delta(const SpinLattice& lat, int site) {
  constexpr auto& b = NeighborTable::kGroupBegin;
  const NeighborTable& table = lat.neighbors();
  const int* row = table.row(site);
  const int x = lat[site];
  Vector8 delta;

  // Each pair potential sum_J x_J S_{J,g} contains x_I in 2 * S_{I,g} ordered
  // pairs (groups are symmetric under negation), so flipping x_I changes it
  // by -4 x_I S_{I,g}.
  for (int g = 0; g < kNumQuadratic; ++g) {
    const int s = sum_range(lat, row, b[g + 1], b[g + 2]);
    delta(g) = 4.0 * x * s / kGroupSizes[static_cast<std::size_t>(g + 1)];
  }

  // Quartic terms only involve group 2 and group 3 sums. x_I sits in the
  // group-2 sums of its 4 nearest neighbors and the group-3 sums of its 4
  // diagonal neighbors; those sums each move by -2 x_I.
  double d6 = 0.0, d7 = 0.0, d8 = 0.0;
  for (int e = b[1]; e < b[2]; ++e) {
    const int* nrow = table.row(row[e]);
    const int s2 = sum_range(lat, nrow, b[1], b[2]);
    const int s3 = sum_range(lat, nrow, b[2], b[3]);
    const int t2 = s2 - 2 * x;
    d6 += fourth(t2) - fourth(s2);
    d8 += (sq(t2) - sq(s2)) * sq(s3);
  }
  for (int e = b[2]; e < b[3]; ++e) {
    const int* nrow = table.row(row[e]);
    const int s2 = sum_range(lat, nrow, b[1], b[2]);
    const int s3 = sum_range(lat, nrow, b[2], b[3]);
    const int t3 = s3 - 2 * x;
    d7 += fourth(t3) - fourth(s3);
    d8 += sq(s2) * (sq(t3) - sq(s3));
  }
  delta(5) = -d6;
  delta(6) = -d7;
  delta(7) = -d8;
  return delta;
}

}  // namespace mlrg
