#include "doctest.h"

#include "lpm/error.hpp"
#include "lpm/lyapunov_perron.hpp"
#include "lpm/parallel.hpp"
#include "lpm/validate/oracles.hpp"
#include "../support.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

using namespace lpm;
using namespace lpm::testing;

namespace {

LPConfig quick(std::size_t n = 1, double dt = 1e-2, double tol = 1e-9) {
  LPConfig c;
  c.n_samples = n;
  c.dt = dt;
  c.tol = tol;
  return c;
}

}  // namespace

TEST_CASE("the origin is a fixed point") {
  const SpectralProblem p = unit_pair(mat2(0.0, 0.1, 0.1, 0.0), 0.05);
  const ManifoldGraph g = unstable_graph(p, Anchor::deterministic(vec({0.0, 0.0})), quick(64));
  CHECK(g.h.cwiseAbs().maxCoeff() == 0.0);
  const ManifoldGraph s = stable_graph(p, Anchor::deterministic(vec({0.0, 0.0})), quick(64));
  CHECK(s.h.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("graph identity: the anchored block is reproduced at tau") {
  const SpectralProblem p = unit_pair(mat2(0.0, 0.1, 0.1, 0.0), 0.05);
  const ManifoldGraph g = unstable_graph(p, Anchor::deterministic(vec({0.8, 0.0})), quick(128, 1e-2, 1e-8));
  const std::size_t N = g.solution.xi.grid().n_steps;
  for (std::size_t s = 0; s < 128; ++s) {
    CHECK(g.solution.xi.state(N, s)[0] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(g.h(static_cast<Eigen::Index>(s), 0) == 0.0);
  }
  CHECK(g.consistency_gap <= 2e-8);
}

TEST_CASE("zero noise gives identical samples") {
  const SpectralProblem p = unit_pair(mat2(0.0, 0.1, 0.1, 0.0));
  const ManifoldGraph one = unstable_graph(p, Anchor::deterministic(vec({1.0, 0.0})), quick(1));
  const ManifoldGraph many = unstable_graph(p, Anchor::deterministic(vec({1.0, 0.0})), quick(7));
  for (Eigen::Index s = 0; s < 7; ++s) CHECK(many.h(s, 1) == one.h(0, 1));
}

TEST_CASE("deterministic graph agrees with the dense quadrature oracle") {
  const SpectralProblem p = unit_pair(mat2(0.0, 0.0, 0.1, 0.0));
  LPConfig c = quick(1, 1e-2, 1e-10);
  c.T_back = 30.0;
  const ManifoldGraph g = unstable_graph(p, Anchor::deterministic(vec({1.0, 0.0})), c);
  const DeterministicGraph o = deterministic_lp_oracle(p, vec({1.0, 0.0}), 0.0, 30.0, 1e-2, 1e-12);
  CHECK(g.h(0, 1) == doctest::Approx(o.h(1)).epsilon(1e-9));
}

TEST_CASE("autonomous graphs are invariant under a shift of tau") {
  const SpectralProblem p = unit_pair(mat2(0.0, 0.1, 0.1, 0.0));
  LPConfig a = quick();
  LPConfig b = quick();
  b.tau = 2.0;
  const ManifoldGraph ga = unstable_graph(p, Anchor::deterministic(vec({0.6, 0.0})), a);
  const ManifoldGraph gb = unstable_graph(p, Anchor::deterministic(vec({0.6, 0.0})), b);
  CHECK(ga.h(0, 1) == doctest::Approx(gb.h(0, 1)).epsilon(1e-10));
}

TEST_CASE("stable graph of a linear problem matches the Sylvester slope") {
  const SpectralProblem p = wide_pair(mat2(0.0, 0.1, 0.0, 0.0));
  const SlopeOracle o = linear_manifold_oracle(Eigen::MatrixXd::Constant(1, 1, -4.0),
                                               Eigen::MatrixXd::Constant(1, 1, 1.0), mat2(0.0, 0.0, 0.1, 0.0));
  CHECK(o.M(0, 0) == doctest::Approx(-0.02));
  const ManifoldGraph g = stable_graph(p, Anchor::deterministic(vec({0.0, 1.0})), quick(1, 1e-3, 1e-10));
  CHECK(g.h(0, 0) == doctest::Approx(o.M(0, 0)).epsilon(1e-3));
  CHECK(g.membership);
}

TEST_CASE("contraction ratios stay below eta") {
  const SpectralProblem p = unit_pair(mat2(0.0, 0.1, 0.1, 0.0), 0.05);
  const LPSolution s = lp_backward_solve(p, Anchor::deterministic(vec({1.0, 0.0})), quick(300, 1e-2, 1e-9));
  REQUIRE(s.trace.converged);
  for (double r : s.trace.ratios) CHECK(r <= s.gap.eta());
  CHECK(s.trace.residual <= s.gap.eta() * s.trace.differences.back() * 1.0001);
  CHECK(s.ito.pass);
}

TEST_CASE("gap violations and forced runs") {
  const SpectralProblem p = unit_pair(mat2(0.0, 0.4, 0.4, 0.0));
  try {
    lp_backward_solve(p, Anchor::deterministic(vec({1.0, 0.0})), quick());
    FAIL("expected GapViolation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::GapViolation);
  }
  LPConfig c = quick();
  c.force = true;
  const LPSolution s = lp_backward_solve(p, Anchor::deterministic(vec({1.0, 0.0})), c);
  CHECK_FALSE(s.certified);
}

TEST_CASE("a short user horizon is rejected") {
  const SpectralProblem p = unit_pair(mat2(0.0, 0.1, 0.1, 0.0));
  LPConfig c = quick(1, 1e-2, 1e-8);
  c.T_back = 1.0;
  try {
    lp_backward_solve(p, Anchor::deterministic(vec({1.0, 0.0})), c);
    FAIL("expected TruncationTooShort");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TruncationTooShort);
  }
  c.enforce_truncation = false;
  CHECK_NOTHROW(lp_backward_solve(p, Anchor::deterministic(vec({1.0, 0.0})), c));
}

TEST_CASE("anchors must lie in their block") {
  const SpectralProblem p = unit_pair(mat2(0.0, 0.1, 0.1, 0.0));
  CHECK_THROWS_AS(unstable_graph(p, Anchor::deterministic(vec({1.0, 0.5})), quick()), Error);
}

TEST_CASE("stochastic solves are independent of the worker count") {
  const SpectralProblem p = unit_pair(mat2(0.0, 0.1, 0.1, 0.0), 0.05);
  set_worker_count(1);
  const ManifoldGraph a = unstable_graph(p, Anchor::deterministic(vec({1.0, 0.0})), quick(1100, 1e-2, 1e-6));
  set_worker_count(3);
  const ManifoldGraph b = unstable_graph(p, Anchor::deterministic(vec({1.0, 0.0})), quick(1100, 1e-2, 1e-6));
  set_worker_count(0);
  CHECK(a.h == b.h);
  CHECK(a.solution.xi.data() == b.solution.xi.data());
}

TEST_CASE("iterates are uncorrelated with future noise increments") {
  const SpectralProblem p = unit_pair(mat2(0.0, 0.1, 0.1, 0.0), 0.05);
  const std::size_t n = 4000;
  const LPConfig c = quick(n, 1e-2, 1e-7);
  const TimeGrid g = TimeGrid::ending_at(0.0, 40.0, 1e-2);
  const WienerEnsemble W(77, g, p.noise.weights, n);
  const LPSolution s = lp_backward_solve(p, Anchor::deterministic(vec({1.0, 0.0})), c, &W);
  const TimeGrid& sg = s.xi.grid();
  const std::size_t off = sg.offset_in(g), N = sg.n_steps;
  const Eigen::MatrixXd W_end = W.values_at(off + N);
  for (std::size_t j : {N / 4, N / 2, N - 20}) {
    const Eigen::MatrixXd future = W_end - W.values_at(off + j);
    const auto xi = s.xi.slice(j);
    for (Eigen::Index k = 0; k < 2; ++k)
      for (Eigen::Index q = 0; q < 2; ++q) {
        const Eigen::ArrayXd prod = xi.col(k).array() * future.col(q).array();
        const double mean = prod.mean();
        const double sd = std::sqrt((prod - mean).square().sum() / static_cast<double>(n - 1));
        CHECK(std::abs(mean) <= 4.0 * sd / std::sqrt(static_cast<double>(n)));
      }
  }
}

TEST_CASE("Lipschitz bound formulas") {
  const SpectralProblem p = wide_pair(mat2(0.0, 0.1, 0.1, 0.0), 0.1);
  LPConfig c = quick();
  c.C_zeta = 1.0;
  const double eta = gap_unstable(p, 1.0).eta();
  CHECK(lipschitz_bound(p, c, Side::Unstable) == doctest::Approx(1.0 * (0.1 + 0.1) / (1 - eta)));
  const double delta = gap_stable(p, 1.0).delta();
  CHECK(lipschitz_bound(p, c, Side::Stable) == doctest::Approx((0.1 / 1.0 + 0.1 / std::sqrt(2.0)) / (1 - delta)));
}

TEST_CASE("deterministic invariance residual shrinks linearly with dt") {
  const SpectralProblem p = wide_pair(mat2(0.0, 0.0, 0.1, 0.0));
  const auto residual = [&](double dt) {
    return invariance_residual(p, Anchor::deterministic(vec({1.0, 0.0})), quick(1, dt, 1e-10), 0.3, Side::Unstable)
        .residual;
  };
  const double coarse = residual(2e-3), fine = residual(1e-3);
  CHECK(fine < 1e-4);
  CHECK(fine / coarse == doctest::Approx(0.5).epsilon(0.2));
}

TEST_CASE("oracles do not depend on the solver") {
  for (const char* f : {"/src/validate/oracles.cpp", "/include/lpm/validate/oracles.hpp"}) {
    std::ifstream in(std::string(LPM_SOURCE_DIR) + f);
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str().find("lyapunov_perron") == std::string::npos);
  }
}
