#include "mlrg/lattice.hpp"

#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <string>

#include "mlrg/errors.hpp"

namespace mlrg {

namespace {

constexpr std::array<Offset, 25> kOffsets = {{
    // group 1
    {0, 0},
    // group 2, d^2 = 1
    {1, 0}, {-1, 0}, {0, 1}, {0, -1},
    // group 3, d^2 = 2
    {1, 1}, {1, -1}, {-1, 1}, {-1, -1},
    // group 4, d^2 = 4
    {2, 0}, {-2, 0}, {0, 2}, {0, -2},
    // group 5, d^2 = 5
    {2, 1}, {2, -1}, {-2, 1}, {-2, -1}, {1, 2}, {1, -2}, {-1, 2}, {-1, -2},
    // group 6, d^2 = 8
    {2, 2}, {2, -2}, {-2, 2}, {-2, -2},
}};

}  // namespace

std::span<const Offset> group_offsets(int k) {
  if (k < 1 || k > kNumGroups) {
    throw ConfigError("group index " + std::to_string(k) + " outside 1..6");
  }
  const auto begin = static_cast<std::size_t>(NeighborTable::kGroupBegin[k - 1]);
  const auto end = static_cast<std::size_t>(NeighborTable::kGroupBegin[k]);
  return std::span<const Offset>(kOffsets).subspan(begin, end - begin);
}

NeighborTable::NeighborTable(int side)
    : side_(side), table_(static_cast<std::size_t>(side) * side * kEntriesPerSite) {
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      const int site = r * side + c;
      for (int e = 0; e < kEntriesPerSite; ++e) {
        const int rr = ((r + kOffsets[e].drow) % side + side) % side;
        const int cc = ((c + kOffsets[e].dcol) % side + side) % side;
        table_[static_cast<std::size_t>(site) * kEntriesPerSite + e] = rr * side + cc;
      }
    }
  }
}

std::shared_ptr<const NeighborTable> NeighborTable::for_side(int side) {
  static std::mutex mutex;
  static std::map<int, std::shared_ptr<const NeighborTable>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[side];
  if (!slot) slot = std::make_shared<const NeighborTable>(side);
  return slot;
}

SpinLattice::SpinLattice(int side, LatticeInit init, std::uint64_t seed)
    : side_(side), spins_(static_cast<std::size_t>(side) * side, Spin{1}) {
  if (side < 2) throw ConfigError("lattice side must be at least 2");
  table_ = NeighborTable::for_side(side);
  switch (init) {
    case LatticeInit::all_up:
      break;
    case LatticeInit::all_down:
      std::fill(spins_.begin(), spins_.end(), Spin{-1});
      break;
    case LatticeInit::random: {
      std::mt19937_64 rng(seed);
      for (auto& s : spins_) s = (rng() >> 63) ? Spin{1} : Spin{-1};
      break;
    }
  }
}

SpinLattice::SpinLattice(int side, std::vector<Spin> spins) : side_(side), spins_(std::move(spins)) {
  if (side < 2) throw ConfigError("lattice side must be at least 2");
  if (spins_.size() != static_cast<std::size_t>(side) * side) {
    throw ConfigError("spin count does not match side " + std::to_string(side));
  }
  for (Spin s : spins_) {
    if (s != 1 && s != -1) throw ConfigError("spins must be +1 or -1");
  }
  table_ = NeighborTable::for_side(side);
}

void SpinLattice::set(int index, Spin value) {
  if (value != 1 && value != -1) throw ConfigError("spins must be +1 or -1");
  spins_[static_cast<std::size_t>(index)] = value;
}

SpinLattice SpinLattice::shifted(int drow, int dcol) const {
  std::vector<Spin> out(spins_.size());
  for (int r = 0; r < side_; ++r) {
    for (int c = 0; c < side_; ++c) {
      out[static_cast<std::size_t>(index(r, c))] = at(r - drow, c - dcol);
    }
  }
  return SpinLattice(side_, std::move(out));
}

SpinLattice SpinLattice::negated() const {
  std::vector<Spin> out(spins_);
  for (auto& s : out) s = static_cast<Spin>(-s);
  return SpinLattice(side_, std::move(out));
}

SpinLattice new_lattice(int side, LatticeInit init, std::uint64_t seed) {
  if (side < SpinLattice::kMinSide) {
    throw ConfigError("lattice side " + std::to_string(side) +
                      " is too small: group offsets reach distance 2, so the side must be at least 4");
  }
  return SpinLattice(side, init, seed);
}

int group_sum(const SpinLattice& lat, int site, int k) {
  if (k < 1 || k > kNumGroups) {
    throw ConfigError("group index " + std::to_string(k) + " outside 1..6");
  }
  int sum = 0;
  for (int j : lat.neighbors().group(site, k)) sum += lat[j];
  return sum;
}

double collective_variable(const SpinLattice& lat, int site, int k) {
  if (site < 0 || site >= lat.size()) throw ConfigError("site index out of range");
  return static_cast<double>(group_sum(lat, site, k)) / kGroupSizes[static_cast<std::size_t>(k - 1)];
}

SpinLattice block_majority(const SpinLattice& lat) {
  const int side = lat.side();
  if (side % 2 != 0) {
    throw ConfigError("majority blocking needs an even lattice side, got " + std::to_string(side));
  }
  const int coarse = side / 2;
  std::vector<Spin> out(static_cast<std::size_t>(coarse) * coarse);
  for (int r = 0; r < coarse; ++r) {
    for (int c = 0; c < coarse; ++c) {
      const Spin lower_left = lat.at(2 * r, 2 * c);
      const int sum = lower_left + lat.at(2 * r + 1, 2 * c) + lat.at(2 * r, 2 * c + 1) +
                      lat.at(2 * r + 1, 2 * c + 1);
      out[static_cast<std::size_t>(r * coarse + c)] = sum > 0 ? Spin{1} : sum < 0 ? Spin{-1} : lower_left;
    }
  }
  return SpinLattice(coarse, std::move(out));
}

double magnetization(const SpinLattice& lat) {
  const auto spins = lat.spins();
  const int sum = std::accumulate(spins.begin(), spins.end(), 0);
  return static_cast<double>(sum) / lat.size();
}

}  // namespace mlrg
