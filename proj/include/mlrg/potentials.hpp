#pragma once

#include <Eigen/Core>

#include "mlrg/lattice.hpp"
#include "mlrg/types.hpp"

namespace mlrg {

/// The eight translation-invariant potentials, minus sign included:
///
///   psi_k     = -sum_J X_{J,1} X_{J,k+1}        k = 1..5
///   psi_{k+5} = -sum_J X_{J,k+1}^4              k = 1, 2
///   psi_8     = -sum_J X_{J,2}^2 X_{J,3}^2
///
/// where X_{J,k} is the collective variable of group k around J.
Vector8 evaluate_basis(const SpinLattice& lat);

/// H(alpha, x) = <alpha, psi(x)>; the density is exp(-H) / Z.
template <typename Derived>
typename Derived::Scalar hamiltonian(const SpinLattice& lat, const Eigen::MatrixBase<Derived>& alpha) {
  EIGEN_STATIC_ASSERT_VECTOR_SPECIFIC_SIZE(Derived, kNumPotentials);
  return alpha.dot(evaluate_basis(lat).template cast<typename Derived::Scalar>());
}

/// Change in each potential when the spin at `site` is flipped; lattice side >= 3.
Vector8 local_basis_delta(const SpinLattice& lat, int site);

/// H(x with `site` flipped) - H(x), in O(1) from the groups around `site`.
inline double local_delta(const SpinLattice& lat, int site, const Vector8& alpha) {
  return alpha.dot(local_basis_delta(lat, site));
}

}  // namespace mlrg
