#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "mlrg/types.hpp"

namespace mlrg {

/// Integer displacement on the square lattice. Rows increase upward, so the
/// lower-left corner of a 2x2 block is its (smallest row, smallest col) site.
struct Offset {
  int drow;
  int dcol;
  friend bool operator==(const Offset&, const Offset&) = default;
};

struct Site {
  int row;
  int col;
};

/// Number of neighbor groups (group 1 is the site itself).
inline constexpr int kNumGroups = 6;

/// Sizes n_k of groups 1..6.
inline constexpr std::array<int, kNumGroups> kGroupSizes = {1, 4, 4, 4, 8, 4};

/// Squared Euclidean distances of groups 1..6.
inline constexpr std::array<int, kNumGroups> kGroupSquaredDistances = {0, 1, 2, 4, 5, 8};

/// Canonical offsets of group k (1-based). Throws ConfigError for k outside 1..6.
std::span<const Offset> group_offsets(int k);

/// Per-side lookup of the wrapped site indices of every group around every
/// site. Shared between all lattices of the same side.
class NeighborTable {
 public:
  static constexpr int kEntriesPerSite = 25;
  static constexpr std::array<int, kNumGroups + 1> kGroupBegin = {0, 1, 5, 9, 13, 21, 25};

  explicit NeighborTable(int side);

  /// Cached table for `side`; thread safe.
  static std::shared_ptr<const NeighborTable> for_side(int side);

  int side() const { return side_; }

  /// Site indices of group k (1-based) around `site`, in group_offsets(k) order.
  std::span<const int> group(int site, int k) const {
    const int* base = table_.data() + static_cast<std::size_t>(site) * kEntriesPerSite;
    return {base + kGroupBegin[k - 1], base + kGroupBegin[k]};
  }

  /// All 25 entries of `site`.
  const int* row(int site) const {
    return table_.data() + static_cast<std::size_t>(site) * kEntriesPerSite;
  }

 private:
  int side_;
  std::vector<int> table_;
};

enum class LatticeInit { all_up, all_down, random };

/// Periodic L x L lattice of +/-1 spins stored row-major.
class SpinLattice {
 public:
  /// Smallest side accepted by the checked factory; smaller sides alias the
  /// group offsets onto the site itself.
  static constexpr int kMinSide = 4;

  /// Unchecked beyond side >= 2; used by the enumeration oracle on tiny lattices.
  SpinLattice(int side, LatticeInit init, std::uint64_t seed = 0);

  /// Lattice from explicit row-major spins; every value must be +1 or -1.
  SpinLattice(int side, std::vector<Spin> spins);

  int side() const { return side_; }
  int size() const { return side_ * side_; }

  int index(int row, int col) const {
    row %= side_;
    col %= side_;
    if (row < 0) row += side_;
    if (col < 0) col += side_;
    return row * side_ + col;
  }
  Site site(int index) const { return {index / side_, index % side_}; }

  Spin operator[](int index) const { return spins_[static_cast<std::size_t>(index)]; }
  Spin at(int row, int col) const { return spins_[static_cast<std::size_t>(index(row, col))]; }

  void set(int index, Spin value);
  void flip(int index) { spins_[static_cast<std::size_t>(index)] = static_cast<Spin>(-spins_[static_cast<std::size_t>(index)]); }

  std::span<const Spin> spins() const { return spins_; }
  const NeighborTable& neighbors() const { return *table_; }

  /// Cyclic shift: result(r, c) = this(r - drow, c - dcol).
  SpinLattice shifted(int drow, int dcol) const;

  /// Global spin flip.
  SpinLattice negated() const;

  friend bool operator==(const SpinLattice& a, const SpinLattice& b) {
    return a.side_ == b.side_ && a.spins_ == b.spins_;
  }

 private:
  int side_;
  std::vector<Spin> spins_;
  std::shared_ptr<const NeighborTable> table_;
};

/// Checked constructor: side must be >= 4. Odd sides are allowed (the coarsest
/// level of a flow from 40 or 80 is 5x5); only blocking needs an even side.
SpinLattice new_lattice(int side, LatticeInit init, std::uint64_t seed = 0);

/// Mean spin over group k around `site` (periodic).
double collective_variable(const SpinLattice& lat, int site, int k);

/// Sum of spins over group k around `site`; n_k times the collective variable.
int group_sum(const SpinLattice& lat, int site, int k);

/// 2x2 majority rule; ties take the block's lower-left spin. Needs even side.
SpinLattice block_majority(const SpinLattice& lat);

double magnetization(const SpinLattice& lat);

}  // namespace mlrg
