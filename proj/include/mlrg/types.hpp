#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace mlrg {

/// Number of potential functions in the fixed basis.
inline constexpr int kNumPotentials = 8;

/// Number of quadratic (pair) potentials; the rest are quartic.
inline constexpr int kNumQuadratic = 5;

template <typename Scalar>
using ParamVector = Eigen::Matrix<Scalar, kNumPotentials, 1>;

template <typename Scalar>
using MomentMatrix = Eigen::Matrix<Scalar, kNumPotentials, kNumPotentials>;

using Vector8 = ParamVector<double>;
using Matrix8 = MomentMatrix<double>;

using Spin = std::int8_t;

/// Canonical Ising parameters at temperature T: alpha_1 = 2/T, rest zero.
inline Vector8 ising_parameters(double temperature) {
  Vector8 alpha = Vector8::Zero();
  alpha(0) = 2.0 / temperature;
  return alpha;
}

}  // namespace mlrg
