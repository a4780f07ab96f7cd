#include <doctest.h>

#include <cmath>
#include <random>

#include "mlrg/potentials.hpp"
#include "support.hpp"

using namespace mlrg;

TEST_CASE("uniform lattices give -L^2 for every potential") {
  for (LatticeInit init : {LatticeInit::all_up, LatticeInit::all_down}) {
    const Vector8 psi = evaluate_basis(new_lattice(4, init));
    for (int k = 0; k < kNumPotentials; ++k) CHECK(psi(k) == doctest::Approx(-16.0));
  }
  const Vector8 psi = evaluate_basis(new_lattice(10, LatticeInit::all_up));
  for (int k = 0; k < kNumPotentials; ++k) CHECK(psi(k) == doctest::Approx(-100.0));
}

TEST_CASE("basis matches the definition on random lattices") {
  std::mt19937_64 rng(17);
  for (int side : {4, 5, 6, 9}) {
    for (int trial = 0; trial < 10; ++trial) {
      const SpinLattice lat = test::random_lattice(side, rng());
      const Vector8 got = evaluate_basis(lat);
      const Vector8 want = test::naive_basis(lat);
      for (int k = 0; k < kNumPotentials; ++k) CHECK(got(k) == doctest::Approx(want(k)).epsilon(1e-12));
    }
  }
}

TEST_CASE("basis is invariant under cyclic shifts and global flips") {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    const SpinLattice lat = test::random_lattice(8, rng());
    const Vector8 psi = evaluate_basis(lat);
    const int dr = static_cast<int>(rng() % 8), dc = static_cast<int>(rng() % 8);
    CHECK((evaluate_basis(lat.shifted(dr, dc)) - psi).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((evaluate_basis(lat.negated()) - psi).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("Ising hamiltonian of the all-up lattice counts the bonds") {
  for (int L : {4, 6, 10}) {
    for (double T : {1.0, 2.269, 3.5}) {
      CHECK(hamiltonian(new_lattice(L, LatticeInit::all_up), ising_parameters(T)) ==
            doctest::Approx(-2.0 * L * L / T));
    }
  }
}

TEST_CASE("hamiltonian is zero at alpha = 0 and linear in alpha") {
  std::mt19937_64 rng(23);
  const SpinLattice lat = test::random_lattice(6, 5);
  CHECK(hamiltonian(lat, Vector8::Zero().eval()) == 0.0);
  for (int trial = 0; trial < 10; ++trial) {
    const Vector8 a = test::random_alpha(rng), b = test::random_alpha(rng);
    CHECK(hamiltonian(lat, (a + b).eval()) == doctest::Approx(hamiltonian(lat, a) + hamiltonian(lat, b)));
  }
}

TEST_CASE("hamiltonian is generic over the scalar type") {
  const SpinLattice lat = test::random_lattice(6, 9);
  const Eigen::Matrix<float, 8, 1> af = Eigen::Matrix<float, 8, 1>::Constant(0.25f);
  const Vector8 ad = Vector8::Constant(0.25);
  CHECK(static_cast<double>(hamiltonian(lat, af)) == doctest::Approx(hamiltonian(lat, ad)).epsilon(1e-5));
}

TEST_CASE("flipping a spin of the all-up Ising lattice costs 8/T") {
  const SpinLattice lat = new_lattice(6, LatticeInit::all_up);
  for (double T : {0.5, 2.0}) {
    for (int site : {0, 13, 35}) CHECK(local_delta(lat, site, ising_parameters(T)) == doctest::Approx(8.0 / T));
  }
}

TEST_CASE("local delta vanishes at alpha = 0") {
  const SpinLattice lat = test::random_lattice(6, 29);
  for (int site = 0; site < lat.size(); ++site) CHECK(local_delta(lat, site, Vector8::Zero()) == 0.0);
}

TEST_CASE("local delta agrees with full recomputation on 200 random cases") {
  std::mt19937_64 rng(31);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int side = 4 + static_cast<int>(rng() % 6);
    SpinLattice lat = test::random_lattice(side, rng());
    const Vector8 alpha = test::random_alpha(rng, -1.0, 1.0);
    const int site = static_cast<int>(rng() % static_cast<std::uint64_t>(lat.size()));
    const double before = hamiltonian(lat, alpha);
    const double d = local_delta(lat, site, alpha);
    lat.flip(site);
    const double full = hamiltonian(lat, alpha) - before;
    worst = std::max(worst, std::abs(d - full) / (1.0 + std::abs(before)));
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("local basis delta matches the change of every potential") {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 50; ++trial) {
    SpinLattice lat = test::random_lattice(5 + static_cast<int>(rng() % 3), rng());
    const int site = static_cast<int>(rng() % static_cast<std::uint64_t>(lat.size()));
    const Vector8 before = evaluate_basis(lat);
    const Vector8 d = local_basis_delta(lat, site);
    lat.flip(site);
    CHECK((evaluate_basis(lat) - before - d).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("a double flip restores the energy") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    SpinLattice lat = test::random_lattice(6, rng());
    const Vector8 alpha = test::random_alpha(rng);
    const int site = static_cast<int>(rng() % 36);
    const double there = local_delta(lat, site, alpha);
    lat.flip(site);
    CHECK(there + local_delta(lat, site, alpha) == doctest::Approx(0.0).epsilon(1e-12));
  }
}
