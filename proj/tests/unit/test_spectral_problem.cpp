#include "doctest.h"

#include "lpm/error.hpp"
#include "lpm/spectral_problem.hpp"
#include "../support.hpp"

#include <cmath>

using namespace lpm;
using namespace lpm::testing;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an lpm::Error");
  return ErrorCode::ConfigError;
}

}  // namespace

TEST_CASE("spectral split follows alpha and beta") {
  const SpectralProblem p = wide_pair(Eigen::MatrixXd::Zero(2, 2));
  CHECK(p.unstable_modes == std::vector<std::size_t>{0});
  CHECK(p.stable_modes == std::vector<std::size_t>{1});
  CHECK(p.is_unstable(0));
  CHECK_FALSE(p.is_unstable(1));
}

TEST_CASE("ordering and gap violations are rejected") {
  ProblemConfig c;
  c.eigenvalues = {1.0, -1.0};
  c.alpha = 1.0;
  c.beta = -1.0;
  c.gamma = -0.5;
  c.zeta = 0.5;
  CHECK(code_of([&] { build_problem(c); }) == ErrorCode::OrderingViolation);

  c.gamma = 0.5;
  c.zeta = -0.5;
  c.eigenvalues = {1.0, 0.0, -1.0};
  CHECK(code_of([&] { build_problem(c); }) == ErrorCode::SpectralGapViolation);
}

TEST_CASE("nonlinearity and noise must vanish at the origin") {
  ProblemConfig c;
  c.eigenvalues = {1.0, -1.0};
  c.alpha = 1.0;
  c.beta = -1.0;
  c.gamma = 0.5;
  c.zeta = -0.5;
  c.nonlinearity = NonlinearityModel::saturated_polynomial({{0, 1, 0, 0.3}}, 1.0);
  CHECK(code_of([&] { build_problem(c); }) == ErrorCode::NonzeroAtOrigin);
  c.nonlinearity = NonlinearityModel::custom_field([](const Eigen::VectorXd& u) {
    return Eigen::VectorXd(u.array() + 1.0);
  });
  CHECK(code_of([&] { build_problem(c); }) == ErrorCode::NonzeroAtOrigin);
}

TEST_CASE("Lipschitz constants of the built-in models") {
  const SpectralProblem p = unit_pair(mat2(0.0, 0.3, 0.4, 0.0), 0.2);
  CHECK(p.L1() == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(p.L2() == doctest::Approx(0.2).epsilon(1e-12));
  Eigen::VectorXd u = vec({2.0, -1.0});
  const Eigen::VectorXd f = p.drift(u);
  CHECK(f(0) == doctest::Approx(-0.3));
  CHECK(f(1) == doctest::Approx(0.8));
}

TEST_CASE("gap values and thresholds") {
  GapInputs in;
  in.K = 2.0;
  in.L1 = 0.05;
  in.L2 = 0.02;
  in.alpha = 2.0;
  in.gamma = 1.0;
  const GapReport g = gap_report(in, 1.5);
  const double eta = 2.0 * (0.05 / 1.0 + 0.05 * 1.5 + 0.02 * 1.5);
  CHECK(g.eta() == doctest::Approx(eta).epsilon(1e-14));
  CHECK(g.delta() == doctest::Approx(eta + 2.0 * 0.02 / std::sqrt(2.0)).epsilon(1e-14));
  CHECK(g.pass_unstable());
  CHECK(g.pass_stable());

  in.L1 = 0.5;
  const GapReport bad = gap_report(in, 1.5);
  CHECK_FALSE(bad.pass_unstable());
  CHECK_FALSE(bad.pass_stable());

  in.alpha = in.gamma;
  CHECK(code_of([&] { gap_report(in, 1.0); }) == ErrorCode::DegenerateGap);
}

TEST_CASE("semigroup and projections") {
  const SpectralProblem p = wide_pair(Eigen::MatrixXd::Zero(2, 2));
  const Eigen::VectorXd v = vec({1.0, 2.0});
  const Eigen::VectorXd s = semigroup_apply(p, 0.5, v, Block::Full);
  CHECK(s(0) == doctest::Approx(std::exp(0.5)));
  CHECK(s(1) == doctest::Approx(2.0 * std::exp(-2.0)));
  const Eigen::VectorXd back = semigroup_apply(p, -0.5, v, Block::Unstable);
  CHECK(back(0) == doctest::Approx(std::exp(-0.5)));
  CHECK(back(1) == 0.0);
  CHECK(code_of([&] { semigroup_apply(p, -0.1, v, Block::Stable); }) == ErrorCode::StableBackwardTime);
  CHECK((project(p, v, Side::Unstable) + project(p, v, Side::Stable) - v).norm() == 0.0);
}

TEST_CASE("Neumann example traces and boundary loading") {
  CHECK(neumann_trace_left(0) == 1.0);
  CHECK(neumann_trace_left(3) == doctest::Approx(std::sqrt(2.0)));
  CHECK(neumann_trace_right(3) == doctest::Approx(-std::sqrt(2.0)));
  const SpectralProblem p = neumann(4, 0.1, 0.05, 0.05);
  CHECK(p.unstable_modes == std::vector<std::size_t>{0});
  REQUIRE(p.loading_ladder);
  CHECK(p.loading_ladder->converged);
  CHECK(p.boundary_loading.rows() == 4);
}
