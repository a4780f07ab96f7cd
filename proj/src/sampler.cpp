#include "mlrg/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <thread>

#include "mlrg/errors.hpp"
#include "mlrg/potentials.hpp"

namespace mlrg {

namespace {

constexpr double kCriticalCoupling = 2.0 / 2.269;

struct ChainResult {
  std::vector<Vector8> samples;
  // psi of the sampled lattice, kept when the measurement is something else
  std::vector<Vector8> sampled_psi;
};

using Measure = std::function<Vector8(const SpinLattice&)>;

// Chain `chain` of a run: seeds its stream and builds its starting lattice.
MetropolisChain start_chain(const Vector8& alpha, int side, const MCSettings& settings, int chain, Rng& rng) {
  const std::uint64_t chain_seed = derive_seed(settings.seed, static_cast<std::uint64_t>(chain));
  rng.seed(chain_seed);
  bool up = false;
  switch (settings.init) {
    case ChainInit::automatic: up = alpha(0) > kCriticalCoupling; break;
    case ChainInit::all_up: up = true; break;
    case ChainInit::random: up = false; break;
  }
  return MetropolisChain(SpinLattice(side, up ? LatticeInit::all_up : LatticeInit::random, derive_seed(chain_seed, 1)));
}

// Runs settings.chains independent chains and collects per-chain samples. Each
// chain owns its lattice and stream; results land in chain-index slots, so the
// outcome does not depend on the thread count.
std::vector<ChainResult> run_chains(const Vector8& alpha, int side, const MCSettings& settings,
                                    const Clamp& clamp, const Measure& measure, bool keep_sampled_psi = false) {
  settings.validate();
  if (side < SpinLattice::kMinSide) {
    throw ConfigError("sampling needs a lattice side of at least 4, got " + std::to_string(side));
  }

  std::vector<char> clamped(static_cast<std::size_t>(side) * side, 0);
  for (const auto& [site, spin] : clamp.sites) {
    if (site < 0 || site >= side * side) throw ConfigError("clamped site out of range");
    if (spin != 1 && spin != -1) throw ConfigError("clamped spin must be +1 or -1");
    clamped[static_cast<std::size_t>(site)] = 1;
  }
  std::vector<int> free_sites;
  for (int i = 0; i < side * side; ++i) {
    if (!clamped[static_cast<std::size_t>(i)]) free_sites.push_back(i);
  }
  if (free_sites.empty()) throw ConfigError("clamp covers every site; nothing to sample");

  const MetropolisChain::Tables tables = MetropolisChain::prepare(alpha);
  const int burn_in = settings.effective_burn_in();
  const int measured = settings.sweeps - burn_in;
  std::vector<ChainResult> results(static_cast<std::size_t>(settings.chains));
  std::vector<std::exception_ptr> errors(results.size());

  auto run_one = [&](int chain) {
    try {
      Rng rng;
      MetropolisChain state = start_chain(alpha, side, settings, chain, rng);
      for (const auto& [site, spin] : clamp.sites) state.set(site, spin);

      for (int s = 0; s < burn_in; ++s) state.sweep(tables, rng, free_sites);
      auto& result = results[static_cast<std::size_t>(chain)];
      result.samples.reserve(static_cast<std::size_t>(measured / settings.measure_every));
      for (int s = 1; s <= measured; ++s) {
        state.sweep(tables, rng, free_sites);
        if (s % settings.measure_every != 0) continue;
        result.samples.push_back(measure(state.lattice()));
        if (keep_sampled_psi) result.sampled_psi.push_back(evaluate_basis(state.lattice()));
      }
    } catch (...) {
      errors[static_cast<std::size_t>(chain)] = std::current_exception();
    }
  };

  int threads = settings.threads > 0 ? settings.threads : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::clamp(threads, 1, settings.chains);
  if (threads == 1) {
    for (int c = 0; c < settings.chains; ++c) run_one(c);
  } else {
    std::vector<std::jthread> workers;
    for (int w = 0; w < threads; ++w) {
      workers.emplace_back([&, w] {
        for (int c = w; c < settings.chains; c += threads) run_one(c);
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

MomentStats summarize(const std::vector<ChainResult>& chains, int batches) {
  MomentStats stats;
  const auto n_chains = static_cast<int>(chains.size());
  std::int64_t total = 0;
  for (const auto& c : chains) total += static_cast<std::int64_t>(c.samples.size());
  if (total == 0) throw ConfigError("no samples were measured");
  stats.n_samples = total;

  for (const auto& c : chains) {
    for (const auto& s : c.samples) stats.mean += s;
  }
  stats.mean /= static_cast<double>(total);
  for (const auto& c : chains) {
    for (const auto& s : c.samples) {
      const Vector8 d = s - stats.mean;
      stats.cov += d * d.transpose();
    }
  }
  stats.cov /= static_cast<double>(total);
  stats.second = stats.cov + stats.mean * stats.mean.transpose();

  if (chains.front().sampled_psi.empty()) {
    stats.mean_response = -stats.cov;
  } else {
    Vector8 sampled_mean = Vector8::Zero();
    for (const auto& c : chains) {
      for (const auto& p : c.sampled_psi) sampled_mean += p;
    }
    sampled_mean /= static_cast<double>(total);
    Matrix8 cross = Matrix8::Zero();
    for (const auto& c : chains) {
      for (std::size_t i = 0; i < c.samples.size(); ++i) {
        cross += (c.samples[i] - stats.mean) * (c.sampled_psi[i] - sampled_mean).transpose();
      }
    }
    stats.mean_response = -cross / static_cast<double>(total);
  }

  // Batch means within each chain: covariance of the pooled mean.
  Matrix8 within = Matrix8::Zero();
  std::vector<Vector8> chain_means;
  for (const auto& c : chains) {
    const auto n = static_cast<int>(c.samples.size());
    Vector8 chain_mean = Vector8::Zero();
    for (const auto& s : c.samples) chain_mean += s;
    chain_mean /= std::max(n, 1);
    chain_means.push_back(chain_mean);

    const int nb = std::min(batches, n);
    if (nb < 2) continue;
    const int size = n / nb;
    std::vector<Vector8> means(static_cast<std::size_t>(nb), Vector8::Zero());
    Vector8 grand = Vector8::Zero();
    for (int b = 0; b < nb; ++b) {
      for (int i = 0; i < size; ++i) means[static_cast<std::size_t>(b)] += c.samples[static_cast<std::size_t>(b * size + i)];
      means[static_cast<std::size_t>(b)] /= size;
      grand += means[static_cast<std::size_t>(b)];
    }
    grand /= nb;
    Matrix8 chain_cov = Matrix8::Zero();
    for (const auto& m : means) chain_cov += (m - grand) * (m - grand).transpose();
    within += chain_cov / (static_cast<double>(nb - 1) * nb);
  }
  within /= static_cast<double>(n_chains) * n_chains;

  Matrix8 between = Matrix8::Zero();
  if (n_chains >= 2) {
    for (const auto& m : chain_means) between += (m - stats.mean) * (m - stats.mean).transpose();
    between /= static_cast<double>(n_chains - 1) * n_chains;
  }

  // Report the larger of the two variance estimates per component and keep
  // the batch-means correlation structure.
  Vector8 scale = Vector8::Ones();
  for (int k = 0; k < kNumPotentials; ++k) {
    const double v = std::max(within(k, k), between(k, k));
    stats.std_error(k) = std::sqrt(v);
    if (within(k, k) > 0.0) scale(k) = std::sqrt(v / within(k, k));
  }
  stats.mean_cov = scale.asDiagonal() * within * scale.asDiagonal();
  for (int k = 0; k < kNumPotentials; ++k) {
    if (within(k, k) <= 0.0) stats.mean_cov(k, k) = stats.std_error(k) * stats.std_error(k);
  }
  return stats;
}

}  // namespace

void MCSettings::validate() const {
  std::ostringstream why;
  if (sweeps <= 0) why << "sweeps must be positive; ";
  if (effective_burn_in() >= sweeps) why << "burn_in must be smaller than sweeps; ";
  if (chains <= 0) why << "chains must be positive; ";
  if (measure_every <= 0) why << "measure_every must be positive; ";
  if (batches <= 0) why << "batches must be positive; ";
  if (threads < 0) why << "threads must be non-negative; ";
  const std::string msg = why.str();
  if (!msg.empty()) throw ConfigError("invalid Monte Carlo settings: " + msg.substr(0, msg.size() - 2));
}

MetropolisChain::MetropolisChain(SpinLattice lattice)
    : lattice_(std::move(lattice)),
      sum2_(static_cast<std::size_t>(lattice_.size())),
      sum3_(static_cast<std::size_t>(lattice_.size())) {
  if (lattice_.side() < 3) throw ConfigError("Metropolis updates need a lattice side of at least 3");
  for (int j = 0; j < lattice_.size(); ++j) {
    sum2_[static_cast<std::size_t>(j)] = static_cast<std::int8_t>(group_sum(lattice_, j, 2));
    sum3_[static_cast<std::size_t>(j)] = static_cast<std::int8_t>(group_sum(lattice_, j, 3));
  }
}

void MetropolisChain::set(int site, Spin value) {
  if (lattice_[site] != value) flip(site);
}

void MetropolisChain::flip(int site) {
  const NeighborTable& table = lattice_.neighbors();
  const int* row = table.row(site);
  const auto step = static_cast<std::int8_t>(-2 * lattice_[site]);
  for (int e = NeighborTable::kGroupBegin[1]; e < NeighborTable::kGroupBegin[2]; ++e) {
    sum2_[static_cast<std::size_t>(row[e])] = static_cast<std::int8_t>(sum2_[static_cast<std::size_t>(row[e])] + step);
  }
  for (int e = NeighborTable::kGroupBegin[2]; e < NeighborTable::kGroupBegin[3]; ++e) {
    sum3_[static_cast<std::size_t>(row[e])] = static_cast<std::int8_t>(sum3_[static_cast<std::size_t>(row[e])] + step);
  }
  lattice_.flip(site);
}

MetropolisChain::Tables MetropolisChain::prepare(const Vector8& alpha) {
  Tables t{};
  t.alpha = alpha;
  t.quartic = alpha(5) != 0.0 || alpha(6) != 0.0 || alpha(7) != 0.0;
  auto sq = [](int s) { return (s / 4.0) * (s / 4.0); };
  auto fourth = [&](int s) { return sq(s) * sq(s); };
  for (int xi = 0; xi < 2; ++xi) {
    const int x = xi == 0 ? -1 : 1;
    for (int a = -4; a <= 4; ++a) {
      for (int b = -4; b <= 4; ++b) {
        const int moved = a - 2 * x;
        if (moved < -4 || moved > 4) continue;
        // a is the sum that contains x (group 2 for nearest, group 3 for
        // diagonal neighbors), b the other one.
        t.nearest[xi][a + 4][b + 4] =
            -alpha(5) * (fourth(moved) - fourth(a)) - alpha(7) * (sq(moved) - sq(a)) * sq(b);
        t.diagonal[xi][b + 4][a + 4] =
            -alpha(6) * (fourth(moved) - fourth(a)) - alpha(7) * (sq(moved) - sq(a)) * sq(b);
      }
    }
  }
  return t;
}

double MetropolisChain::delta(int site, const Tables& t) const {
  constexpr auto& b = NeighborTable::kGroupBegin;
  const int* row = lattice_.neighbors().row(site);
  const int x = lattice_[site];
  const auto s2 = sum2_[static_cast<std::size_t>(site)];
  const auto s3 = sum3_[static_cast<std::size_t>(site)];
  int s4 = 0, s5 = 0, s6 = 0;
  for (int e = b[3]; e < b[4]; ++e) s4 += lattice_[row[e]];
  for (int e = b[4]; e < b[5]; ++e) s5 += lattice_[row[e]];
  for (int e = b[5]; e < b[6]; ++e) s6 += lattice_[row[e]];
  const Vector8& a = t.alpha;
  // 4 x S_g / n_g per pair potential
  double d = x * (a(0) * s2 + a(1) * s3 + a(2) * s4 + 0.5 * a(3) * s5 + a(4) * s6);
  if (t.quartic) {
    const int xi = x > 0 ? 1 : 0;
    for (int e = b[1]; e < b[2]; ++e) {
      const auto j = static_cast<std::size_t>(row[e]);
      d += t.nearest[xi][sum2_[j] + 4][sum3_[j] + 4];
    }
    for (int e = b[2]; e < b[3]; ++e) {
      const auto j = static_cast<std::size_t>(row[e]);
      d += t.diagonal[xi][sum2_[j] + 4][sum3_[j] + 4];
    }
  }
  return d;
}

int MetropolisChain::sweep(const Tables& tables, Rng& rng, std::span<const int> sites) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  int accepted = 0;
  for (int site : sites) {
    const double dh = delta(site, tables);
    if (!std::isfinite(dh)) {
      throw NumericalError("non-finite energy change at site " + std::to_string(site) +
                           "; the parameter vector has likely diverged");
    }
    if (dh <= 0.0 || uniform(rng) < std::exp(-dh)) {
      flip(site);
      ++accepted;
    }
  }
  return accepted;
}

int MetropolisChain::sweep(const Tables& tables, Rng& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  int accepted = 0;
  for (int site = 0; site < lattice_.size(); ++site) {
    const double dh = delta(site, tables);
    if (!std::isfinite(dh)) {
      throw NumericalError("non-finite energy change at site " + std::to_string(site) +
                           "; the parameter vector has likely diverged");
    }
    if (dh <= 0.0 || uniform(rng) < std::exp(-dh)) {
      flip(site);
      ++accepted;
    }
  }
  return accepted;
}

int metropolis_sweep(SpinLattice& lat, const Vector8& alpha, Rng& rng, std::span<const int> free_sites) {
  MetropolisChain chain(lat);
  const int accepted = chain.sweep(MetropolisChain::prepare(alpha), rng, free_sites);
  lat = chain.lattice();
  return accepted;
}

int metropolis_sweep(SpinLattice& lat, const Vector8& alpha, Rng& rng) {
  MetropolisChain chain(lat);
  const int accepted = chain.sweep(MetropolisChain::prepare(alpha), rng);
  lat = chain.lattice();
  return accepted;
}

MomentStats estimate_moments(const Vector8& alpha, int side, const MCSettings& settings) {
  const auto chains = run_chains(alpha, side, settings, Clamp{}, [](const SpinLattice& lat) { return evaluate_basis(lat); });
  return summarize(chains, settings.batches);
}

MomentStats blocked_moments(const Vector8& alpha, int side, const MCSettings& settings, int levels) {
  if (levels < 1) throw ConfigError("blocking needs at least one level");
  int coarse = side;
  for (int l = 0; l < levels; ++l) {
    if (coarse % 2 != 0) {
      throw ConfigError("lattice side " + std::to_string(side) + " cannot be blocked " + std::to_string(levels) +
                        " times by 2x2 majority");
    }
    coarse /= 2;
  }
  const auto chains = run_chains(alpha, side, settings, Clamp{}, [levels](const SpinLattice& lat) {
    SpinLattice c = block_majority(lat);
    for (int l = 1; l < levels; ++l) c = block_majority(c);
    return evaluate_basis(c);
  }, true);
  return summarize(chains, settings.batches);
}

ScalarEstimate conditional_expectation(const Vector8& alpha, int side, const Clamp& clamp, const Observable& h,
                                       const MCSettings& settings) {
  const auto chains = run_chains(alpha, side, settings, clamp, [&h](const SpinLattice& lat) {
    Vector8 v = Vector8::Zero();
    v(0) = h(lat);
    return v;
  });
  const MomentStats stats = summarize(chains, settings.batches);
  return {stats.mean(0), stats.std_error(0)};
}

std::vector<SpinLattice> draw_configurations(const Vector8& alpha, int side, int count, int thin,
                                             const MCSettings& settings) {
  settings.validate();
  if (side < SpinLattice::kMinSide) {
    throw ConfigError("sampling needs a lattice side of at least 4, got " + std::to_string(side));
  }
  if (count < 1) throw ConfigError("sample count must be positive");
  if (thin < 1) throw ConfigError("thinning interval must be positive");

  const MetropolisChain::Tables tables = MetropolisChain::prepare(alpha);
  std::vector<SpinLattice> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int chain = 0; chain < settings.chains; ++chain) {
    const int begin = static_cast<int>(static_cast<long long>(count) * chain / settings.chains);
    const int end = static_cast<int>(static_cast<long long>(count) * (chain + 1) / settings.chains);
    if (begin == end) continue;
    Rng rng;
    MetropolisChain state = start_chain(alpha, side, settings, chain, rng);
    for (int s = 0; s < settings.effective_burn_in(); ++s) state.sweep(tables, rng);
    for (int i = begin; i < end; ++i) {
      for (int s = 0; s < thin; ++s) state.sweep(tables, rng);
      out.push_back(state.lattice());
    }
  }
  return out;
}

}  // namespace mlrg
