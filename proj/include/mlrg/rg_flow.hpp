#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mlrg/errors.hpp"
#include "mlrg/lm_solver.hpp"
#include "mlrg/sampler.hpp"
#include "mlrg/types.hpp"

namespace mlrg {

/// Squared group distances d_k^2 of the quadratic potentials, padded with
/// zeros for the quartic ones.
inline Vector8 second_moment_weights() {
  Vector8 w;
  w << 1.0, 2.0, 4.0, 5.0, 8.0, 0.0, 0.0, 0.0;
  return w;
}

/// M2 = sum_k d_k^2 alpha_k over the quadratic couplings.
template <typename Derived>
typename Derived::Scalar second_moment(const Eigen::MatrixBase<Derived>& alpha) {
  EIGEN_STATIC_ASSERT_VECTOR_SPECIFIC_SIZE(Derived, kNumPotentials);
  return alpha.dot(second_moment_weights().cast<typename Derived::Scalar>());
}

struct FlowOptions {
  MCSettings mc;
  LMConfig lm;
  /// Block the fine ensemble j times for level j instead of resampling each
  /// fitted level.
  bool multiblock = false;
  /// Start each level's fit from the previous level's parameters instead of
  /// (2/T, 0, ..., 0).
  bool warm_start = false;
  /// Independent flows per temperature behind the slope statistic. With two
  /// or more, the statistic is their mean slope and its standard error the
  /// replica scatter; one flow falls back to the propagated error.
  int replicas = 1;
};

struct RGStepResult {
  Vector8 alpha;
  LMReport report;
  /// Blocked moments the fit matched.
  MomentStats target;
};

/// One renormalization step: blocked moments of alpha_j on side_j, then a
/// Monte Carlo moment-matching fit on side_j / 2 starting at alpha_init.
/// mc.seed seeds the blocked sampling; the fit uses derive_seed(mc.seed, 1).
RGStepResult rg_step(const Vector8& alpha_j, int side_j, const MCSettings& mc, const LMConfig& lm,
                     const Vector8& alpha_init);

struct RGFlowRecord {
  double temperature = 0.0;
  int fine_side = 0;
  int steps = 0;
  /// alphas[0] = (2/T, 0, ..., 0); alphas[j] lives on sides[j].
  std::vector<Vector8> alphas;
  std::vector<int> sides;
  std::vector<double> m2;
  std::vector<double> m2_std_error;
  /// Joint covariance of the m2 values. Each level's fit noise is carried to
  /// later levels through the linearized dependence of their blocked targets
  /// on the couplings they were sampled from.
  Eigen::MatrixXd m2_cov;
  /// reports[j - 1] is the fit that produced alphas[j].
  std::vector<LMReport> reports;
  std::vector<std::uint64_t> seeds;
  /// False when a level failed; the record then holds the levels before it.
  bool complete = true;
  std::string failure;
};

/// Throws ConfigError unless fine_side can be halved `steps` times with every
/// blocked side even and every coarse side at least 4.
void check_flow_sides(int fine_side, int steps);

/// Seed of a flow at temperature T under a master seed.
std::uint64_t flow_seed(std::uint64_t master, double temperature);

/// Recursive renormalization flow of the Ising density at temperature T.
RGFlowRecord flow(double temperature, int fine_side, int steps, const FlowOptions& options);

struct SlopeStat {
  double slope = 0.0;
  double std_error = 0.0;
};

/// Weighted least-squares slope of M2 against the step index, weights
/// 1/se_j^2. Levels without sampling error are fitted exactly: the fine level
/// of a flow pins the line. The standard error propagates m2_cov when present
/// (correlated levels), otherwise the independent m2_std_error values.
SlopeStat flow_slope(const RGFlowRecord& record);

/// The replicas of flow(T) under `options`: replica 0 uses options.mc.seed,
/// replica r > 0 the master seed derived from it with index r.
std::vector<RGFlowRecord> flow_replicas(double temperature, int fine_side, int steps, const FlowOptions& options);

/// Mean of the replicas' flow_slope values with standard error sd / sqrt(R);
/// a single replica returns its own flow_slope.
SlopeStat replica_slope(const std::vector<RGFlowRecord>& replicas);

struct TcResult {
  std::optional<double> tc;
  std::vector<double> temperatures;
  std::vector<SlopeStat> slopes;
  /// flows[i] holds the replicas at temperatures[i].
  std::vector<std::vector<RGFlowRecord>> flows;
};

/// Raised when the slope never changes sign over the grid; carries the table.
class BracketError : public NumericalError {
 public:
  BracketError(const std::string& what, TcResult result) : NumericalError(what), result_(std::move(result)) {}
  const TcResult& result() const { return result_; }

 private:
  TcResult result_;
};

/// Flows on an evenly spaced grid of n_grid temperatures in [t_lo, t_hi]; Tc is
/// where the M2 slope crosses zero (linear interpolation). Each refinement pass
/// reruns the grid on the bracketing interval and merges the tables.
TcResult locate_tc(double t_lo, double t_hi, int fine_side, int steps, const FlowOptions& options, int n_grid,
                   int refine_passes = 0);

/// Zero crossing of the slope table (temperatures ascending): the mean of all
/// positive-to-non-positive crossings. Empty if there is none.
std::optional<double> slope_zero_crossing(const std::vector<double>& temperatures,
                                          const std::vector<SlopeStat>& slopes);

}  // namespace mlrg
