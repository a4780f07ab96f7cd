#include <cmath>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "mlrg/rg_flow.hpp"
#include "support.hpp"

using namespace mlrg;

namespace {

FlowOptions small_options(std::uint64_t seed) {
  FlowOptions o;
  o.mc = test::quick_mc(300, seed, 2);
  o.lm.max_iters = 8;
  return o;
}

RGFlowRecord linear_record(const std::vector<double>& m2, const std::vector<double>& se) {
  RGFlowRecord r;
  r.m2 = m2;
  r.m2_std_error = se;
  return r;
}

}  // namespace

TEST_CASE("second moment of the couplings") {
  Vector8 a;
  a << 1, 1, 1, 1, 1, 1, 1, 1;
  CHECK(second_moment(a) == 20.0);
  Vector8 b;
  b << 0.5, -1, 0, 2, 0.25, 9, 9, 9;
  CHECK(second_moment(b) == doctest::Approx(0.5 - 2 + 10 + 2));
  CHECK(second_moment(ising_parameters(2.0)) == doctest::Approx(1.0));

  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const Vector8 x = test::random_alpha(rng);
    const Vector8 y = test::random_alpha(rng);
    CHECK(second_moment((2.0 * x - 3.0 * y).eval()) == doctest::Approx(2 * second_moment(x) - 3 * second_moment(y)));
  }
}

TEST_CASE("flow side validation") {
  CHECK_NOTHROW(check_flow_sides(40, 3));
  CHECK_NOTHROW(check_flow_sides(80, 4));
  CHECK_NOTHROW(check_flow_sides(8, 1));
  CHECK_THROWS_AS(check_flow_sides(40, 4), ConfigError);  // 40 -> 20 -> 10 -> 5 -> odd
  CHECK_THROWS_AS(check_flow_sides(20, 3), ConfigError);  // coarse side 2.5
  CHECK_THROWS_AS(check_flow_sides(6, 1), ConfigError);   // coarse side 3
  CHECK_THROWS_AS(check_flow_sides(9, 1), ConfigError);
  CHECK_THROWS_AS(check_flow_sides(16, 0), ConfigError);
  CHECK_THROWS_AS(rg_step(ising_parameters(2.3), 6, test::quick_mc(10, 1), LMConfig{}, ising_parameters(2.3)),
                  ConfigError);
  CHECK_THROWS_AS(flow(-1.0, 16, 1, small_options(1)), ConfigError);
}

TEST_CASE("slope statistic") {
  SUBCASE("exact line") {
    const SlopeStat s = flow_slope(linear_record({1.0, 1.5, 2.0, 2.5}, {0, 0, 0, 0}));
    CHECK(s.slope == doctest::Approx(0.5));
    CHECK(s.std_error == 0.0);
  }
  SUBCASE("weighted fit through the exact fine level") {
    // weights 4, 4: sum w j^2 = 20, sum w j (y - 1) = 2 + 16
    const SlopeStat s = flow_slope(linear_record({1.0, 1.5, 3.0}, {0.0, 0.5, 0.5}));
    CHECK(s.slope == doctest::Approx(0.9));
    CHECK(s.std_error == doctest::Approx(1.0 / std::sqrt(20.0)));
  }
  SUBCASE("weighted fit without an exact level") {
    // weights 1, 1, 1/4: weighted mean j = 2/3, S_xx = 1
    const SlopeStat s = flow_slope(linear_record({0.0, 1.0, 4.0}, {1.0, 1.0, 2.0}));
    CHECK(s.slope == doctest::Approx(5.0 / 3.0));
    CHECK(s.std_error == doctest::Approx(1.0));
  }
  SUBCASE("equal errors reduce to ordinary least squares") {
    const SlopeStat s = flow_slope(linear_record({0.0, 5.0, 1.0}, {0.3, 0.3, 0.3}));
    CHECK(s.slope == doctest::Approx(0.5));
    CHECK(s.std_error == doctest::Approx(0.3 / std::sqrt(2.0)));
  }
  SUBCASE("a noisy level barely moves the slope") {
    const SlopeStat a = flow_slope(linear_record({1.0, 1.1, 1.2}, {0.0, 0.01, 0.02}));
    const SlopeStat b = flow_slope(linear_record({1.0, 1.1, 1.2, -50.0}, {0.0, 0.01, 0.02, 1e3}));
    CHECK(b.slope == doctest::Approx(a.slope).epsilon(1e-4));
  }
  CHECK_THROWS_AS(flow_slope(linear_record({1.0}, {0.0})), ConfigError);
}

TEST_CASE("slope error propagates correlated levels") {
  RGFlowRecord r = linear_record({1.0, 1.5, 3.0}, {0.0, 0.5, 0.5});
  r.m2_cov = Eigen::MatrixXd::Zero(3, 3);
  r.m2_cov(1, 1) = r.m2_cov(2, 2) = 0.25;
  const SlopeStat independent = flow_slope(r);
  CHECK(independent.std_error == doctest::Approx(1.0 / std::sqrt(20.0)));
  r.m2_cov(1, 2) = r.m2_cov(2, 1) = 0.2;
  // c = (1/5, 2/5) on levels 1, 2: var = (0.04 + 0.16) 0.25 + 2 * 0.08 * 0.2
  const SlopeStat correlated = flow_slope(r);
  CHECK(correlated.slope == doctest::Approx(independent.slope));
  CHECK(correlated.std_error == doctest::Approx(std::sqrt(0.05 + 0.032)));
}

TEST_CASE("replica slope statistic") {
  const RGFlowRecord a = linear_record({1.0, 1.2}, {0.0, 0.1});
  const RGFlowRecord b = linear_record({1.0, 1.4}, {0.0, 0.1});
  const RGFlowRecord c = linear_record({1.0, 1.3}, {0.0, 0.1});
  const SlopeStat single = replica_slope({a});
  CHECK(single.slope == doctest::Approx(0.2));
  CHECK(single.std_error == doctest::Approx(0.1));
  const SlopeStat three = replica_slope({a, b, c});
  CHECK(three.slope == doctest::Approx(0.3));
  CHECK(three.std_error == doctest::Approx(0.1 / std::sqrt(3.0)));
  CHECK_THROWS_AS(replica_slope({}), ConfigError);
}

TEST_CASE("slope zero crossing") {
  const auto stats = [](std::vector<double> v) {
    std::vector<SlopeStat> out;
    for (double x : v) out.push_back({x, 0.1});
    return out;
  };
  const std::vector<double> t{2.0, 2.1, 2.2, 2.3};
  CHECK(*slope_zero_crossing(t, stats({3, 1, -1, -3})) == doctest::Approx(2.15));
  CHECK(*slope_zero_crossing(t, stats({3, 1, 0, -3})) == doctest::Approx(2.2));
  // two downward crossings are averaged; the upward one is ignored
  CHECK(*slope_zero_crossing(t, stats({1, -1, 1, -1})) == doctest::Approx((2.05 + 2.25) / 2));
  CHECK_FALSE(slope_zero_crossing(t, stats({1, 2, 3, 4})).has_value());
  CHECK_FALSE(slope_zero_crossing(t, stats({-1, -2, -3, -4})).has_value());
}

TEST_CASE("small flow: structure and determinism") {
  const FlowOptions o = small_options(77);
  const RGFlowRecord a = flow(2.3, 16, 2, o);
  REQUIRE(a.complete);
  CHECK(a.sides == std::vector<int>{16, 8, 4});
  REQUIRE(a.alphas.size() == 3);
  CHECK(a.alphas[0] == ising_parameters(2.3));
  CHECK(a.m2[0] == doctest::Approx(2.0 / 2.3));
  CHECK(a.m2_std_error[0] == 0.0);
  CHECK(a.reports.size() == 2);
  CHECK(a.seeds.size() == 2);
  CHECK(a.seeds[0] != a.seeds[1]);
  for (std::size_t j = 1; j < a.m2.size(); ++j) {
    CHECK(a.m2[j] == doctest::Approx(second_moment(a.alphas[j])));
    CHECK(a.m2_std_error[j] > 0.0);
    CHECK(a.alphas[j] == a.reports[j - 1].alpha_final);
  }

  const RGFlowRecord b = flow(2.3, 16, 2, o);
  CHECK(a.alphas == b.alphas);
  CHECK(a.m2_std_error == b.m2_std_error);

  FlowOptions other = o;
  other.mc.seed = 78;
  CHECK(flow(2.3, 16, 2, other).alphas[1] != a.alphas[1]);
  CHECK(flow_seed(77, 2.3) != flow_seed(77, 2.3000000000000003));
}

TEST_CASE("flow covariance of the M2 levels") {
  const RGFlowRecord r = flow(2.3, 16, 2, small_options(41));
  REQUIRE(r.m2_cov.rows() == 3);
  CHECK(r.m2_cov.isApprox(r.m2_cov.transpose()));
  CHECK(r.m2_cov.row(0).isZero());
  for (int j = 0; j < 3; ++j) CHECK(std::sqrt(r.m2_cov(j, j)) == doctest::Approx(r.m2_std_error[static_cast<std::size_t>(j)]));
  CHECK(r.m2_cov(1, 2) != 0.0);  // level 2 is sampled from level 1's couplings
  CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(r.m2_cov).eigenvalues().minCoeff() > -1e-12);

  FlowOptions o = small_options(41);
  o.multiblock = true;
  const RGFlowRecord m = flow(2.3, 16, 2, o);
  CHECK(m.m2_cov(1, 2) == 0.0);  // every level is blocked from the exact fine density
}

TEST_CASE("flow replicas") {
  FlowOptions o = small_options(43);
  o.replicas = 3;
  const auto reps = flow_replicas(2.3, 16, 1, o);
  REQUIRE(reps.size() == 3);
  CHECK(reps[0].alphas == flow(2.3, 16, 1, small_options(43)).alphas);
  CHECK(reps[1].alphas[1] != reps[0].alphas[1]);
  CHECK(reps[2].alphas[1] != reps[1].alphas[1]);
  CHECK(flow_replicas(2.3, 16, 1, o)[2].alphas == reps[2].alphas);
  o.replicas = 0;
  CHECK_THROWS_AS(flow_replicas(2.3, 16, 1, o), ConfigError);
}

TEST_CASE("multiblock and warm start variants run") {
  FlowOptions o = small_options(5);
  o.multiblock = true;
  o.warm_start = true;
  const RGFlowRecord r = flow(2.0, 16, 2, o);
  CHECK(r.complete);
  CHECK(r.sides == std::vector<int>{16, 8, 4});
  CHECK(r.m2[1] > 0.0);
}

TEST_CASE("rg_step seeds its fit from the step seed") {
  const MCSettings mc = test::quick_mc(300, 12, 2);
  LMConfig lm;
  lm.max_iters = 4;
  const RGStepResult s = rg_step(ising_parameters(2.5), 8, mc, lm, ising_parameters(2.5));
  const MomentStats direct = blocked_moments(ising_parameters(2.5), 8, mc);
  CHECK(s.target.mean == direct.mean);
  CHECK(s.alpha == s.report.alpha_final);
}

TEST_CASE("locate_tc validation and bracket errors") {
  const FlowOptions o = small_options(3);
  CHECK_THROWS_AS(locate_tc(2.4, 2.2, 16, 2, o, 4), ConfigError);
  CHECK_THROWS_AS(locate_tc(2.2, 2.4, 16, 2, o, 1), ConfigError);
  CHECK_THROWS_AS(locate_tc(2.2, 2.4, 16, 2, o, 3, -1), ConfigError);
  CHECK_THROWS_AS(locate_tc(2.2, 2.4, 20, 3, o, 3), ConfigError);

  // Deep in the ordered phase the couplings grow under blocking: no sign change.
  try {
    locate_tc(1.0, 1.2, 16, 2, o, 2);
    FAIL("expected BracketError");
  } catch (const BracketError& e) {
    CHECK(std::string(e.what()).find("[1, 1.2]") != std::string::npos);
    CHECK(e.result().temperatures.size() == 2);
    CHECK(e.result().slopes.size() == 2);
    CHECK_FALSE(e.result().tc.has_value());
  }
}
