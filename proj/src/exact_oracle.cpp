#include "mlrg/exact_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <string>

#include "mlrg/errors.hpp"
#include "mlrg/potentials.hpp"

namespace mlrg {

namespace {

constexpr int kMaxFreeSpins = 20;

void check_side(int side) {
  if (side < 2 || side > ExactEnumerator::kMaxSide) {
    throw ConfigError("exact enumeration supports sides 2..4, got " + std::to_string(side) +
                      " (cost grows as 2^(L^2))");
  }
}

SpinLattice decode(int side, std::uint64_t index) {
  std::vector<Spin> spins(static_cast<std::size_t>(side) * side);
  for (std::size_t i = 0; i < spins.size(); ++i) spins[i] = ((index >> i) & 1U) ? Spin{1} : Spin{-1};
  return SpinLattice(side, std::move(spins));
}

}  // namespace

MomentStats ExactResult::as_stats() const {
  MomentStats s;
  s.mean = mean;
  s.second = second;
  s.cov = cov;
  s.mean_response = -cov;
  return s;
}

ExactEnumerator::ExactEnumerator(int side) : side_(side) {
  check_side(side);
  const std::uint64_t n = configurations();
  psi_.reserve(n);
  if (side == kMaxSide) coarse_psi_.reserve(n);
  for (std::uint64_t c = 0; c < n; ++c) {
    const SpinLattice lat = decode(side, c);
    psi_.push_back(evaluate_basis(lat));
    if (side == kMaxSide) coarse_psi_.push_back(evaluate_basis(block_majority(lat)));
  }
}

std::shared_ptr<const ExactEnumerator> ExactEnumerator::for_side(int side) {
  check_side(side);
  static std::mutex mutex;
  static std::map<int, std::shared_ptr<const ExactEnumerator>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[side];
  if (!slot) slot = std::make_shared<const ExactEnumerator>(side);
  return slot;
}

SpinLattice ExactEnumerator::configuration(std::uint64_t index) const { return decode(side_, index); }

std::pair<std::vector<double>, double> ExactEnumerator::weights(const Vector8& alpha) const {
  if (!alpha.allFinite()) throw NumericalError("parameter vector has non-finite entries");
  std::vector<double> w(psi_.size());
  double h_min = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < psi_.size(); ++c) {
    w[c] = alpha.dot(psi_[c]);
    h_min = std::min(h_min, w[c]);
  }
  // log-sum-exp shifted by the smallest energy
  double total = 0.0;
  for (auto& x : w) {
    x = std::exp(-(x - h_min));
    total += x;
  }
  for (auto& x : w) x /= total;
  return {std::move(w), -h_min + std::log(total)};
}

ExactResult ExactEnumerator::moments(const Vector8& alpha) const {
  const auto [w, log_z] = weights(alpha);
  ExactResult r;
  r.log_z = log_z;
  for (std::size_t c = 0; c < psi_.size(); ++c) r.mean += w[c] * psi_[c];
  for (std::size_t c = 0; c < psi_.size(); ++c) {
    const Vector8 d = psi_[c] - r.mean;
    r.cov += w[c] * (d * d.transpose());
  }
  r.second = r.cov + r.mean * r.mean.transpose();
  return r;
}

Vector8 ExactEnumerator::blocked_moments(const Vector8& alpha) const {
  if (coarse_psi_.empty()) throw ConfigError("blocked moments are enumerated for side 4 only");
  const auto [w, log_z] = weights(alpha);
  Vector8 mean = Vector8::Zero();
  for (std::size_t c = 0; c < coarse_psi_.size(); ++c) mean += w[c] * coarse_psi_[c];
  return mean;
}

ExactResult exact_moments(const Vector8& alpha, int side) { return ExactEnumerator::for_side(side)->moments(alpha); }

Vector8 exact_blocked_moments(const Vector8& alpha, int side) {
  if (side != 4) throw ConfigError("exact blocked moments are defined for side 4 only");
  return ExactEnumerator::for_side(side)->blocked_moments(alpha);
}

double exact_conditional(const Vector8& alpha, int side, const Clamp& clamp, const Observable& h) {
  if (side < 2) throw ConfigError("lattice side must be at least 2");
  const int n = side * side;
  SpinLattice lat(side, LatticeInit::all_up);
  std::vector<char> clamped(static_cast<std::size_t>(n), 0);
  for (const auto& [site, spin] : clamp.sites) {
    if (site < 0 || site >= n) throw ConfigError("clamped site out of range");
    lat.set(site, spin);
    clamped[static_cast<std::size_t>(site)] = 1;
  }
  std::vector<int> free_sites;
  for (int i = 0; i < n; ++i) {
    if (!clamped[static_cast<std::size_t>(i)]) free_sites.push_back(i);
  }
  if (static_cast<int>(free_sites.size()) > kMaxFreeSpins) {
    throw ConfigError("exact conditional refuses " + std::to_string(free_sites.size()) + " free spins (limit " +
                      std::to_string(kMaxFreeSpins) + ")");
  }

  const std::uint64_t count = std::uint64_t{1} << free_sites.size();
  std::vector<double> energy(count);
  std::vector<double> value(count);
  double h_min = std::numeric_limits<double>::infinity();
  for (std::uint64_t c = 0; c < count; ++c) {
    for (std::size_t i = 0; i < free_sites.size(); ++i) lat.set(free_sites[i], ((c >> i) & 1U) ? Spin{1} : Spin{-1});
    energy[c] = hamiltonian(lat, alpha);
    value[c] = h(lat);
    h_min = std::min(h_min, energy[c]);
  }
  double num = 0.0, den = 0.0;
  for (std::uint64_t c = 0; c < count; ++c) {
    const double w = std::exp(-(energy[c] - h_min));
    num += w * value[c];
    den += w;
  }
  return num / den;
}

std::pair<Vector8, Matrix8> exact_residual_jacobian(const Vector8& alpha, const Vector8& target, int side) {
  const ExactResult r = exact_moments(alpha, side);
  return {r.mean - target, -r.cov};
}

}  // namespace mlrg
