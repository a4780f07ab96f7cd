#include "mlrg/lm_solver.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>
#include <sstream>

#include "mlrg/errors.hpp"

namespace mlrg {

namespace {

// Relative accuracy of an exactly enumerated moment; sets the round-off floor
// for the relative criterion.
constexpr double kRoundOff = 1e-12;

struct Checks {
  const LMConfig& config;
  const MomentTarget& target;
  double scale;    // max_j |mu_j|
  Matrix8 whiten;  // T with T^T T = C_target^-1; identity for exact targets

  bool zero_moment(int k) const {
    const double mu = std::abs(target.mean(k));
    return mu == 0.0 || mu < 2.0 * target.std_error(k);
  }

  double denominator(int k) const { return zero_moment(k) ? scale : std::abs(target.mean(k)); }

  // A zero target moment is checked as |f_k| / max_j |mu_j| in either form.
  double atol_value(double f, int k) const {
    const double d = denominator(k);
    if (d == 0.0) return f == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    if (zero_moment(k)) return std::abs(f) / d;
    return config.atol_form == AtolForm::paper ? std::sqrt(std::abs(f) / 2.0) / d : std::abs(f) / std::sqrt(2.0) / d;
  }

  // Largest |f_k| that passes the absolute criterion without the noise floor.
  double atol_threshold(int k) const {
    const double d = denominator(k);
    if (zero_moment(k)) return config.atol * d;
    return config.atol_form == AtolForm::paper ? 2.0 * (config.atol * d) * (config.atol * d)
                                               : std::sqrt(2.0) * config.atol * d;
  }

  double noise(const MomentStats& model, int k) const {
    return std::hypot(model.std_error(k), target.std_error(k));
  }

  // Every component passes ATOL, or the residual as a whole is consistent with
  // sampling noise: its squared Mahalanobis length under C_model + C_target is
  // within noise_z standard deviations of the chi-square mean.
  bool absolute_ok(const Vector8& f, const MomentStats& model) const {
    bool all = true;
    for (int k = 0; k < kNumPotentials; ++k) all = all && atol_value(f(k), k) < config.atol;
    if (all) return true;
    if (config.noise_z <= 0.0) return false;
    const Matrix8 c = model.mean_cov + target.mean_cov;
    if (!(c.diagonal().maxCoeff() > 0.0)) return false;
    const Vector8 w = Eigen::CompleteOrthogonalDecomposition<Matrix8>(c).solve(f);
    const double dof = kNumPotentials;
    return f.dot(w) <= dof + config.noise_z * std::sqrt(2.0 * dof);
  }

  // Variance of eps = 1/2 |T f|^2 due to model sampling noise (delta method
  // plus the chi-square term).
  double error_variance(const Vector8& f, const MomentStats& model) const {
    const Matrix8 c = whiten * model.mean_cov * whiten.transpose();
    const Vector8 g = whiten * f;
    return g.dot(c * g) + 0.5 * (c * c).trace();
  }

  // Sampling noise of eps_new - eps_old.
  double change_noise(const Vector8& f_old, const MomentStats& m_old, const Vector8& f_new,
                      const MomentStats& m_new) const {
    return std::sqrt(std::max(0.0, error_variance(f_old, m_old) + error_variance(f_new, m_new)));
  }

  double error(const Vector8& f) const { return error_value((whiten * f).eval()); }

  bool relative_ok(double eps_old, double eps_new, double noise) const {
    if (!std::isfinite(eps_new)) return false;
    const double round_off = 0.5 * kNumPotentials * (kRoundOff * scale) * (kRoundOff * scale);
    double allowed = config.rtol * eps_old + round_off;
    if (config.noise_z > 0.0) allowed = std::max(allowed, config.noise_z * noise);
    return std::abs(eps_new - eps_old) <= allowed;
  }
};

Matrix8 whitening(const Matrix8& c) {
  if (!(c.diagonal().maxCoeff() > 0.0)) return Matrix8::Identity();
  const Eigen::SelfAdjointEigenSolver<Matrix8> es(c);
  const double floor = 1e-12 * es.eigenvalues().maxCoeff();
  const Vector8 inv_sqrt = es.eigenvalues().cwiseMax(floor).cwiseSqrt().cwiseInverse();
  return inv_sqrt.asDiagonal() * es.eigenvectors().transpose();
}

// Directions with singular values below 1e-10 of the largest are ones the
// sampled configurations never explore (e.g. deep in the ordered phase on a
// small lattice). The solver does not move along them, so they are dropped
// rather than inverted into astronomically large variances.
Matrix8 pseudo_inverse(const Matrix8& m) {
  Eigen::CompleteOrthogonalDecomposition<Matrix8> cod;
  cod.setThreshold(1e-10);
  cod.compute(m);
  return cod.pseudoInverse();
}

// Linear map from the raw residual f to the step alpha - alpha_new taken by
// lm_step on the whitened system: (J_w^T J_w + lambda D)^-1 J_w^T T.
Matrix8 step_operator(const Matrix8& jw, const Matrix8& whiten, double lambda, Damping damping) {
  const Matrix8 jtj = jw.transpose() * jw;
  Matrix8 system = jtj;
  if (damping == Damping::diag_jtj) {
    system.diagonal() += lambda * jtj.diagonal();
  } else {
    system.diagonal().array() += lambda;
  }
  return system.partialPivLu().solve(jw.transpose() * whiten);
}

}  // namespace

const char* to_string(Termination t) {
  switch (t) {
    case Termination::converged: return "converged";
    case Termination::max_iters: return "max_iters";
    case Termination::lambda_overflow: return "lambda_overflow";
    case Termination::solver_failure: return "solver_failure";
  }
  return "unknown";
}

const char* to_string(Damping d) { return d == Damping::diag_jtj ? "diag" : "identity"; }

const char* to_string(AtolForm f) { return f == AtolForm::paper ? "paper" : "normalized"; }

void LMConfig::validate() const {
  std::ostringstream why;
  if (!(lambda0 > 0.0)) why << "lambda0 must be positive; ";
  if (!(lambda_down_factor > 1.0)) why << "lambda_down_factor must exceed 1; ";
  if (!(lambda_up_factor > 1.0)) why << "lambda_up_factor must exceed 1; ";
  if (streak_length < 1) why << "streak_length must be at least 1; ";
  if (!(rtol > 0.0)) why << "rtol must be positive; ";
  if (!(atol > 0.0)) why << "atol must be positive; ";
  if (max_iters < 1) why << "max_iters must be at least 1; ";
  if (!(lambda_max > lambda0)) why << "lambda_max must exceed lambda0; ";
  if (!(noise_z >= 0.0)) why << "noise_z must be non-negative; ";
  const std::string msg = why.str();
  if (!msg.empty()) throw ConfigError("invalid solver settings: " + msg.substr(0, msg.size() - 2));
}

LMReport solve(const MomentProvider& provider, const MomentTarget& target, const Vector8& alpha0,
               const LMConfig& config) {
  config.validate();
  if (!alpha0.allFinite()) throw ConfigError("starting parameters must be finite");
  if (!target.mean.allFinite()) throw ConfigError("target moments must be finite");

  const Checks checks{config, target, target.mean.cwiseAbs().maxCoeff(), whitening(target.mean_cov)};
  LMReport report;

  int evaluation = 0;
  Vector8 alpha = alpha0;
  MomentStats stats = provider(alpha, evaluation++);
  if (!stats.mean.allFinite()) throw NumericalError("moment provider returned non-finite moments at the start point");
  Vector8 f = residual(stats.mean, target.mean);
  double eps = checks.error(f);
  report.error_trace.push_back(eps);
  report.alpha_trace.push_back(alpha);

  for (int k = 0; k < kNumPotentials; ++k) {
    if (checks.zero_moment(k)) {
      report.warnings.push_back("target moment " + std::to_string(k + 1) +
                                " is indistinguishable from zero; its absolute check uses max_j |mu_j|");
    }
    const double noise = checks.noise(stats, k);
    if (noise > 0.0 && checks.atol_threshold(k) < 2.0 * noise) {
      report.warnings.push_back("ATOL for moment " + std::to_string(k + 1) +
                                " is below the accuracy afforded by the Monte Carlo sampling");
    }
  }

  double lambda = config.lambda0;
  int streak = 0;
  bool converged = eps == 0.0;
  Termination termination = Termination::max_iters;

  // A stochastic iterate keeps the error of the draw that won its acceptance,
  // which is biased low; later candidates would be compared against that luck.
  // Such iterates are re-sampled before every step instead.
  const bool stochastic = stats.std_error.maxCoeff() > 0.0;

  // alpha_final - alpha_noiseless ~ sens_target * eta_target + (model noise of
  // every accepted step), linearized through the steps; model_cov is the
  // covariance of the second term.
  Matrix8 sens_target = Matrix8::Zero();
  Matrix8 sens_start = Matrix8::Identity();
  Matrix8 model_cov = Matrix8::Zero();

  while (!converged && report.iterations < config.max_iters) {
    if (stochastic && report.iterations > 0) {
      stats = provider(alpha, evaluation++);
      if (!stats.mean.allFinite()) throw NumericalError("moment provider returned non-finite moments");
      f = residual(stats.mean, target.mean);
      eps = checks.error(f);
    }
    report.reference_trace.push_back(eps);
    const Matrix8 jacobian = -stats.cov;
    report.lambda_trace.push_back(lambda);
    report.condition_trace.push_back(condition_number(jacobian));
    ++report.iterations;

    const std::optional<Vector8> candidate =
        lm_step<double>(alpha, (checks.whiten * f).eval(), (checks.whiten * jacobian).eval(), lambda, config.damping);
    bool accepted = false;
    double eps_new = std::numeric_limits<double>::infinity();
    MomentStats cand_stats;
    Vector8 f_new = Vector8::Constant(std::numeric_limits<double>::infinity());
    if (candidate) {
      try {
        cand_stats = provider(*candidate, evaluation++);
        f_new = residual(cand_stats.mean, target.mean);
        eps_new = checks.error(f_new);
        if (!std::isfinite(eps_new)) eps_new = std::numeric_limits<double>::infinity();
      } catch (const NumericalError&) {
        // a divergent candidate counts as an error increase
      }
    }
    report.error_trace.push_back(eps_new);

    const double noise = std::isfinite(eps_new) ? checks.change_noise(f, stats, f_new, cand_stats) : 0.0;
    const bool relative = checks.relative_ok(eps, eps_new, noise);
    if (eps_new < eps) {
      accepted = true;
      const Matrix8 m = step_operator(checks.whiten * jacobian, checks.whiten, lambda, config.damping);
      const Matrix8 g = Matrix8::Identity() - m * jacobian;
      sens_target = g * sens_target + m;
      sens_start = g * sens_start;
      model_cov = g * model_cov * g.transpose() + m * stats.mean_cov * m.transpose();
      alpha = *candidate;
      stats = cand_stats;
      f = f_new;
      eps = eps_new;
      if (++streak >= config.streak_length) {
        lambda /= config.lambda_down_factor;
        streak = 0;
      }
    } else {
      streak = 0;
      lambda *= config.lambda_up_factor;
    }
    report.accepted.push_back(accepted);
    report.alpha_trace.push_back(alpha);

    if (relative && checks.absolute_ok(f, stats)) {
      converged = true;
      break;
    }
    if (lambda > config.lambda_max) {
      termination = candidate ? Termination::lambda_overflow : Termination::solver_failure;
      break;
    }
  }
  if (converged) termination = Termination::converged;

  report.converged = converged;
  report.termination = termination;
  report.alpha_final = alpha;
  report.final_moments = stats.mean;
  report.final_residual = f;
  const Matrix8 jinv = pseudo_inverse(-stats.cov);
  report.alpha_cov = jinv * (stats.mean_cov + target.mean_cov) * jinv.transpose();
  report.estimator_cov = sens_target * target.mean_cov * sens_target.transpose() + model_cov;
  report.target_sensitivity = sens_target;
  report.start_sensitivity = sens_start;
  report.alpha_std_error = report.alpha_cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  return report;
}

}  // namespace mlrg
