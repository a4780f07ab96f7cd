#include "mlrg/rg_flow.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mlrg/providers.hpp"

namespace mlrg {

namespace {

std::string side_error(int fine_side, int steps) {
  std::ostringstream os;
  os << "fine side " << fine_side << " cannot be blocked " << steps
     << " times: every blocked side must be even and every coarse side at least 4";
  return os.str();
}

}  // namespace

void check_flow_sides(int fine_side, int steps) {
  if (steps < 1) throw ConfigError("a flow needs at least one step");
  int side = fine_side;
  for (int j = 0; j < steps; ++j) {
    if (side % 2 != 0 || side / 2 < SpinLattice::kMinSide) throw ConfigError(side_error(fine_side, steps));
    side /= 2;
  }
}

RGStepResult rg_step(const Vector8& alpha_j, int side_j, const MCSettings& mc, const LMConfig& lm,
                     const Vector8& alpha_init) {
  if (side_j % 2 != 0 || side_j / 2 < SpinLattice::kMinSide) {
    throw ConfigError("renormalization step needs an even side with side/2 >= 4, got " + std::to_string(side_j));
  }
  RGStepResult out;
  out.target = blocked_moments(alpha_j, side_j, mc);
  MCSettings fit = mc;
  fit.seed = derive_seed(mc.seed, 1);
  out.report = solve(monte_carlo_provider(side_j / 2, fit), MomentTarget::from(out.target), alpha_init, lm);
  out.alpha = out.report.alpha_final;
  return out;
}

std::uint64_t flow_seed(std::uint64_t master, double temperature) {
  return derive_seed(master, std::bit_cast<std::uint64_t>(temperature));
}

RGFlowRecord flow(double temperature, int fine_side, int steps, const FlowOptions& options) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be positive");
  check_flow_sides(fine_side, steps);
  options.mc.validate();
  options.lm.validate();

  RGFlowRecord rec;
  rec.temperature = temperature;
  rec.fine_side = fine_side;
  rec.steps = steps;
  const Vector8 alpha0 = ising_parameters(temperature);
  rec.alphas.push_back(alpha0);
  rec.sides.push_back(fine_side);
  rec.m2.push_back(second_moment(alpha0));
  rec.m2_std_error.push_back(0.0);
  rec.m2_cov = Eigen::MatrixXd::Zero(1, 1);

  // The flow statistic asks whether M2 changes beyond the Monte Carlo noise of
  // the procedure itself, so levels carry the run-to-run scatter of their fits
  // (estimator_cov), not the identifiability of alpha. cross[k] holds
  // Cov(alpha_j, alpha_k) for the current level j.
  const Vector8 w = second_moment_weights();
  std::vector<Matrix8> cross{Matrix8::Zero()};

  const std::uint64_t base = flow_seed(options.mc.seed, temperature);
  int side = fine_side;
  for (int j = 1; j <= steps; ++j) {
    const std::uint64_t seed = derive_seed(base, static_cast<std::uint64_t>(j));
    rec.seeds.push_back(seed);
    MCSettings mc = options.mc;
    mc.seed = seed;
    const Vector8 init = options.warm_start ? rec.alphas.back() : alpha0;
    try {
      RGStepResult step;
      if (options.multiblock) {
        step.target = blocked_moments(alpha0, fine_side, mc, j);
        MCSettings fit = mc;
        fit.seed = derive_seed(seed, 1);
        step.report = solve(monte_carlo_provider(side / 2, fit), MomentTarget::from(step.target), init, options.lm);
        step.alpha = step.report.alpha_final;
      } else {
        step = rg_step(rec.alphas.back(), side, mc, options.lm, init);
      }
      if (step.report.termination == Termination::solver_failure) {
        rec.complete = false;
        rec.failure = "solver failure at step " + std::to_string(j);
        rec.reports.push_back(std::move(step.report));
        return rec;
      }
      // Dependence of this level's couplings on the previous level's: through
      // the blocked target when it was sampled from them, and through the
      // starting point under a warm start.
      Matrix8 link = Matrix8::Zero();
      if (!options.multiblock) link += step.report.target_sensitivity * step.target.mean_response;
      if (options.warm_start) link += step.report.start_sensitivity;
      for (auto& c : cross) c = link * c;
      const Matrix8 var = cross.back() * link.transpose() + step.report.estimator_cov;
      cross.push_back(var);

      const auto n = static_cast<Eigen::Index>(cross.size());
      rec.m2_cov.conservativeResize(n, n);
      for (Eigen::Index k = 0; k < n; ++k) {
        rec.m2_cov(n - 1, k) = rec.m2_cov(k, n - 1) = w.dot(cross[static_cast<std::size_t>(k)] * w);
      }

      side /= 2;
      rec.alphas.push_back(step.alpha);
      rec.sides.push_back(side);
      rec.m2.push_back(second_moment(step.alpha));
      rec.m2_std_error.push_back(std::sqrt(std::max(0.0, rec.m2_cov(n - 1, n - 1))));
      rec.reports.push_back(std::move(step.report));
    } catch (const NumericalError& e) {
      rec.complete = false;
      rec.failure = "step " + std::to_string(j) + ": " + e.what();
      return rec;
    }
  }
  return rec;
}

SlopeStat flow_slope(const RGFlowRecord& record) {
  const auto n = static_cast<int>(record.m2.size());
  if (n < 2) throw ConfigError("slope needs at least two levels");
  std::vector<int> exact;
  for (int j = 0; j < n; ++j) {
    if (!(record.m2_std_error[static_cast<std::size_t>(j)] > 0.0)) exact.push_back(j);
  }
  const auto y = [&](int j) { return record.m2[static_cast<std::size_t>(j)]; };
  const auto w = [&](int j) {
    const double se = record.m2_std_error[static_cast<std::size_t>(j)];
    return 1.0 / (se * se);
  };

  SlopeStat s;
  if (exact.size() >= 2) {
    // error-free levels fix the line; plain least squares through them
    double mean_j = 0.0;
    for (int j : exact) mean_j += j;
    mean_j /= static_cast<double>(exact.size());
    double sxx = 0.0;
    double sxy = 0.0;
    for (int j : exact) {
      sxx += (j - mean_j) * (j - mean_j);
      sxy += (j - mean_j) * y(j);
    }
    s.slope = sxy / sxx;
    return s;
  }
  // With one error-free level (the fine level of a flow) the line passes
  // through it; otherwise the weighted mean of j is the pivot.
  double pivot = 0.0;
  if (exact.size() == 1) {
    pivot = exact[0];
  } else {
    double sw = 0.0;
    for (int j = 0; j < n; ++j) {
      sw += w(j);
      pivot += w(j) * j;
    }
    pivot /= sw;
  }
  // slope = sum_j c_j m2_j; its variance is c^T Cov(m2) c
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  double sxx = 0.0;
  for (int j = 0; j < n; ++j) {
    if (exact.size() == 1 && j == exact[0]) continue;
    sxx += w(j) * (j - pivot) * (j - pivot);
    c(j) = w(j) * (j - pivot);
  }
  c /= sxx;
  // the coefficients sum to zero: about the weighted mean of j automatically,
  // through the exact level by construction
  if (exact.size() == 1) c(exact[0]) = -c.sum();
  for (int j = 0; j < n; ++j) s.slope += c(j) * y(j);
  if (record.m2_cov.rows() == n && record.m2_cov.cols() == n) {
    s.std_error = std::sqrt(std::max(0.0, c.dot(record.m2_cov * c)));
  } else {
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += c(j) * c(j) / w(j);
    s.std_error = std::sqrt(var);
  }
  return s;
}

std::vector<RGFlowRecord> flow_replicas(double temperature, int fine_side, int steps, const FlowOptions& options) {
  if (options.replicas < 1) throw ConfigError("a flow needs at least one replica");
  std::vector<RGFlowRecord> out;
  for (int r = 0; r < options.replicas; ++r) {
    FlowOptions o = options;
    if (r > 0) o.mc.seed = derive_seed(options.mc.seed, static_cast<std::uint64_t>(r));
    out.push_back(flow(temperature, fine_side, steps, o));
  }
  return out;
}

SlopeStat replica_slope(const std::vector<RGFlowRecord>& replicas) {
  if (replicas.empty()) throw ConfigError("slope needs at least one replica");
  if (replicas.size() == 1) return flow_slope(replicas.front());
  std::vector<double> slopes;
  for (const auto& rec : replicas) slopes.push_back(flow_slope(rec).slope);
  const double n = static_cast<double>(slopes.size());
  double mean = 0.0;
  for (double v : slopes) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : slopes) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

std::optional<double> slope_zero_crossing(const std::vector<double>& temperatures,
                                          const std::vector<SlopeStat>& slopes) {
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i + 1 < temperatures.size(); ++i) {
    const double a = slopes[i].slope;
    const double b = slopes[i + 1].slope;
    if (a > 0.0 && b <= 0.0) {
      const double t0 = temperatures[i];
      const double t1 = temperatures[i + 1];
      sum += t0 + (t1 - t0) * a / (a - b);
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / count;
}

TcResult locate_tc(double t_lo, double t_hi, int fine_side, int steps, const FlowOptions& options, int n_grid,
                   int refine_passes) {
  if (!(t_lo > 0.0) || !(t_hi > t_lo)) throw ConfigError("temperature bracket must satisfy 0 < t_lo < t_hi");
  if (n_grid < 2) throw ConfigError("temperature grid needs at least 2 points");
  if (refine_passes < 0) throw ConfigError("refine passes must be non-negative");
  if (options.replicas < 1) throw ConfigError("a flow needs at least one replica");
  check_flow_sides(fine_side, steps);

  TcResult result;
  auto run_grid = [&](double lo, double hi) {
    for (int i = 0; i < n_grid; ++i) {
      const double t = lo + (hi - lo) * i / (n_grid - 1);
      if (std::find(result.temperatures.begin(), result.temperatures.end(), t) != result.temperatures.end()) continue;
      std::vector<RGFlowRecord> reps = flow_replicas(t, fine_side, steps, options);
      for (const auto& rec : reps) {
        if (!rec.complete) throw NumericalError("flow at T=" + std::to_string(t) + " failed: " + rec.failure);
      }
      const SlopeStat s = replica_slope(reps);
      // keep the table sorted by temperature
      const auto pos = std::lower_bound(result.temperatures.begin(), result.temperatures.end(), t) -
                       result.temperatures.begin();
      result.temperatures.insert(result.temperatures.begin() + pos, t);
      result.slopes.insert(result.slopes.begin() + pos, s);
      result.flows.insert(result.flows.begin() + pos, std::move(reps));
    }
  };

  run_grid(t_lo, t_hi);
  for (int pass = 0; pass < refine_passes; ++pass) {
    const auto tc = slope_zero_crossing(result.temperatures, result.slopes);
    if (!tc) break;
    const auto hi = std::upper_bound(result.temperatures.begin(), result.temperatures.end(), *tc);
    if (hi == result.temperatures.begin() || hi == result.temperatures.end()) break;
    run_grid(*(hi - 1), *hi);
  }

  result.tc = slope_zero_crossing(result.temperatures, result.slopes);
  if (!result.tc) {
    std::ostringstream os;
    os << "bracket [" << t_lo << ", " << t_hi << "] does not contain transition: the M2 slope never changes sign";
    throw BracketError(os.str(), std::move(result));
  }
  return result;
}

}  // namespace mlrg
