#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mlrg/moments.hpp"
#include "mlrg/types.hpp"

namespace mlrg {

enum class Damping {
  /// JᵀJ + λ diag(JᵀJ)
  diag_jtj,
  /// JᵀJ + λ I
  identity,
};

enum class AtolForm {
  /// max_k sqrt(|f_k| / 2) / |mu_k|
  paper,
  /// max_k |f_k| / sqrt(2) / |mu_k|
  normalized,
};

enum class Termination { converged, max_iters, lambda_overflow, solver_failure };

const char* to_string(Termination t);
const char* to_string(Damping d);
const char* to_string(AtolForm f);

struct LMConfig {
  double lambda0 = 1.0;
  double lambda_down_factor = 10.0;
  double lambda_up_factor = 10.0;
  /// Consecutive accepted steps before lambda is divided by lambda_down_factor.
  int streak_length = 2;
  double rtol = 1e-3;
  double atol = 1e-3;
  int max_iters = 50;
  double lambda_max = 1e8;
  Damping damping = Damping::diag_jtj;
  AtolForm atol_form = AtolForm::paper;
  /// Monte Carlo floor on both tolerances. The relative check also passes when
  /// the change of the error is within noise_z standard deviations of its
  /// sampling noise; the absolute check also passes when the residual's squared
  /// Mahalanobis length under C_model + C_target is at most 8 + noise_z * 4
  /// (chi-square with 8 degrees of freedom). 0 turns the floor off. Exact
  /// providers report zero error, so the floor never applies to them.
  double noise_z = 3.0;

  void validate() const;
};

/// Target moments mu and their sampling uncertainty (zero for exact targets).
struct MomentTarget {
  Vector8 mean = Vector8::Zero();
  Vector8 std_error = Vector8::Zero();
  Matrix8 mean_cov = Matrix8::Zero();

  static MomentTarget from(const MomentStats& s) { return {s.mean, s.std_error, s.mean_cov}; }
};

/// Returns E_alpha[psi] and cov_alpha(psi). `evaluation` counts provider calls
/// within one solve (0 = starting point) so stochastic providers can derive a
/// fresh, reproducible seed per call.
using MomentProvider = std::function<MomentStats(const Vector8& alpha, int evaluation)>;

struct LMReport {
  Vector8 alpha_final = Vector8::Zero();
  bool converged = false;
  int iterations = 0;
  Termination termination = Termination::max_iters;
  /// Initial error, then the candidate error of every iteration.
  std::vector<double> error_trace;
  /// Error of the current iterate that every iteration's candidate was
  /// compared against. Equals the last accepted error for exact providers;
  /// stochastic providers re-sample the iterate each iteration.
  std::vector<double> reference_trace;
  /// Lambda used by every iteration.
  std::vector<double> lambda_trace;
  /// 2-norm condition number of the Jacobian used by every iteration.
  std::vector<double> condition_trace;
  /// Whether each iteration's candidate was accepted.
  std::vector<bool> accepted;
  /// Current iterate after each iteration (initial point first).
  std::vector<Vector8> alpha_trace;
  Vector8 final_moments = Vector8::Zero();
  Vector8 final_residual = Vector8::Zero();
  /// Linearized covariance of the solution of the moment equations:
  /// J^+ (C_model + C_target) J^+T. Measures how well the samples determine
  /// alpha, including directions the overcomplete basis leaves soft.
  Matrix8 alpha_cov = Matrix8::Zero();
  /// Covariance of the reported alpha_final itself: the sampling noise of the
  /// target and of every model evaluation that drove an accepted step,
  /// propagated linearly through those steps. Soft directions the damped steps
  /// barely move along stay near alpha0 and carry little variance, so this is
  /// the run-to-run scatter of the estimate, not its distance from the truth.
  Matrix8 estimator_cov = Matrix8::Zero();
  /// Linearized response of alpha_final to a shift of the target moments and
  /// of the starting point, chained through the accepted steps.
  Matrix8 target_sensitivity = Matrix8::Zero();
  Matrix8 start_sensitivity = Matrix8::Identity();
  Vector8 alpha_std_error = Vector8::Zero();
  std::vector<std::string> warnings;
};

/// f = model - target.
template <typename DerivedA, typename DerivedB>
auto residual(const Eigen::MatrixBase<DerivedA>& model, const Eigen::MatrixBase<DerivedB>& target) {
  return (model - target).eval();
}

/// eps = 1/2 sum f_k^2.
template <typename Derived>
typename Derived::Scalar error_value(const Eigen::MatrixBase<Derived>& f) {
  return typename Derived::Scalar(0.5) * f.squaredNorm();
}

/// One Levenberg-Marquardt update alpha - (JᵀJ + λD)^-1 Jᵀf, solved by LU with
/// partial pivoting. Empty when the system is numerically singular (smallest
/// pivot below 1e-14 of the matrix norm).
template <typename Scalar>
std::optional<ParamVector<Scalar>> lm_step(const ParamVector<Scalar>& alpha, const ParamVector<Scalar>& f,
                                           const MomentMatrix<Scalar>& jacobian, Scalar lambda, Damping damping) {
  if (!jacobian.allFinite() || !f.allFinite()) return std::nullopt;
  const MomentMatrix<Scalar> jtj = jacobian.transpose() * jacobian;
  MomentMatrix<Scalar> system = jtj;
  if (damping == Damping::diag_jtj) {
    system.diagonal() += lambda * jtj.diagonal();
  } else {
    system.diagonal().array() += lambda;
  }
  const Eigen::PartialPivLU<MomentMatrix<Scalar>> lu(system);
  const Scalar norm = system.cwiseAbs().rowwise().sum().maxCoeff();
  const Scalar min_pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
  if (!(norm > Scalar(0)) || min_pivot < Scalar(1e-14) * norm) return std::nullopt;
  const ParamVector<Scalar> delta = lu.solve(jacobian.transpose() * f);
  if (!delta.allFinite()) return std::nullopt;
  return ParamVector<Scalar>(alpha - delta);
}

/// Ratio of extreme singular values; +infinity for a singular matrix.
template <typename Derived>
typename Derived::Scalar condition_number(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (!m.allFinite()) return std::numeric_limits<Scalar>::infinity();
  const Eigen::JacobiSVD<typename Derived::PlainObject> svd(m);
  const auto& sv = svd.singularValues();
  const Scalar smallest = sv(sv.size() - 1);
  if (!(smallest > Scalar(0))) return std::numeric_limits<Scalar>::infinity();
  return sv(0) / smallest;
}

/// Solves E_alpha[psi] = target.mean by Levenberg-Marquardt, starting at alpha0.
/// Rejected candidates (error not decreased) leave the iterate untouched and
/// multiply lambda by lambda_up_factor. Converges when both the relative
/// change of the error and every per-component absolute check pass.
LMReport solve(const MomentProvider& provider, const MomentTarget& target, const Vector8& alpha0,
               const LMConfig& config);

}  // namespace mlrg
