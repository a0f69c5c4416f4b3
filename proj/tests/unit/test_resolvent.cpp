#include "doctest.h"

#include "lpm/error.hpp"
#include "lpm/ladder.hpp"
#include "lpm/resolvent.hpp"
#include "lpm/validate/oracles.hpp"
#include "../support.hpp"

#include <cmath>
#include <numbers>

using namespace lpm;
using namespace lpm::testing;

TEST_CASE("boundary resolvent reproduces a manufactured solution") {
  // phi = cos(pi x) + x^2 / 2: phi'(0) = 0, phi'(1) = 1.
  const double lambda = 3.0;
  const double pi = std::numbers::pi;
  double prev = 0.0;
  for (std::size_t n : {65u, 129u, 257u}) {
    BoundaryTriple d;
    d.a = 0.0;
    d.b = 1.0;
    d.f.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = static_cast<double>(i) / static_cast<double>(n - 1);
      d.f[i] = (lambda + pi * pi) * std::cos(pi * x) + lambda * 0.5 * x * x - 1.0;
    }
    const std::vector<double> phi = resolvent_boundary(lambda, d);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = static_cast<double>(i) / static_cast<double>(n - 1);
      err = std::max(err, std::abs(phi[i] - std::cos(pi * x) - 0.5 * x * x));
    }
    if (prev > 0) CHECK(err < 0.3 * prev);
    prev = err;
  }
  CHECK(prev < 1e-3);
}

TEST_CASE("lambda must be positive") {
  BoundaryTriple d;
  d.f = {0.0, 0.0, 0.0};
  CHECK_THROWS_AS(resolvent_boundary(0.0, d), Error);
}

TEST_CASE("regularization converges to the identity at rate 1/lambda") {
  const SpectralProblem p = neumann(6);
  XElement g;
  g.modes = vec({1.0, -0.5, 0.25, 0.0, 0.1, 0.0});
  const double limit = regularization_error_oracle(p, 1e6, g.modes) * 1e6;
  for (double lambda : {1e3, 1e4, 1e5}) {
    const double err = (lambda_regularize(p, lambda, g) - g.modes).norm();
    CHECK(err == doctest::Approx(regularization_error_oracle(p, lambda, g.modes)).epsilon(1e-10));
    CHECK(err * lambda == doctest::Approx(limit).epsilon(0.1));
  }
  CHECK_THROWS_AS(lambda_regularize(p, 1.0, g), Error);
}

TEST_CASE("diamond convolution of a constant forcing matches the integrated semigroup") {
  const SpectralProblem p = wide_pair(Eigen::MatrixXd::Zero(2, 2));
  XElement f;
  f.modes = vec({1.0, 1.0});
  const double dt = 1e-3;
  const std::vector<XElement> path(1001, f);
  const auto S = convolve_diamond(p, path, dt);
  const Eigen::VectorXd exact = integrated_semigroup(p, 1.0, f.modes);
  CHECK(exact(0) == doctest::Approx(std::exp(1.0) - 1.0));
  CHECK(exact(1) == doctest::Approx((1.0 - std::exp(-4.0)) / 4.0));
  CHECK((S.back() - exact).norm() < 1e-6);
}

TEST_CASE("C_kappa and the delta table") {
  CHECK_THROWS_AS(c_kappa(0.1, 1.0, -1.0, -1.5), Error);
  const double c = c_kappa(0.5, 1.0, -1.0, -0.5);
  CHECK(c == doctest::Approx(2 * 0.5 * std::exp(0.5) / (1 - std::exp(-0.5))));

  const CZetaChoice ch = c_zeta_from_delta(unit_pair(Eigen::MatrixXd::Zero(2, 2)), -0.5, 1e-2, 5.0);
  CHECK(ch.C > 3.5);
  CHECK(ch.C < 4.5);
  CHECK(ch.rho > 0);
  const CZetaChoice wide = c_zeta_from_delta(wide_pair(Eigen::MatrixXd::Zero(2, 2)), -2.0, 1e-2, 5.0);
  CHECK(wide.C < ch.C);
}

TEST_CASE("Richardson ladder removes the 1/lambda error") {
  const auto f = [](double l) { return vec({2.0 + 3.0 / l - 1.0 / (l * l)}); };
  const LadderResult r = richardson_extrapolate(default_ladder(), f);
  CHECK(r.diagnostics.converged);
  CHECK(r.limit(0) == doctest::Approx(2.0).epsilon(1e-10));
  CHECK_THROWS_AS(validate_ladder({10.0, 5.0, 100.0}), Error);
}
