#include "doctest.h"

#include "lpm/condexp.hpp"
#include "lpm/error.hpp"
#include "lpm/stochastic.hpp"
#include "../support.hpp"

#include <cmath>

using namespace lpm;
using namespace lpm::testing;

namespace {

Eigen::MatrixXd gaussian(std::uint64_t seed, std::size_t n, std::size_t cols) {
  const WienerEnsemble w(seed, TimeGrid::from_start(0.0, 1.0, 1), Eigen::VectorXd::Ones(static_cast<Eigen::Index>(cols)), n);
  return w.values_at(1);
}

}  // namespace

TEST_CASE("basis sizes") {
  CHECK(RegressionBasis::polynomial({0, 1}, 2).size(2) == 6);
  CHECK(RegressionBasis::tensor_hermite({0, 1}, 2).size(2) == 9);
  const SpectralProblem p = wide_pair(Eigen::MatrixXd::Zero(2, 2));
  CHECK(RegressionBasis::default_for(p).size(2) == 4);
}

TEST_CASE("a target inside the span is reproduced") {
  const Eigen::MatrixXd X = gaussian(1, 2000, 2);
  Eigen::MatrixXd y(2000, 1);
  y.col(0) = 1.0 + 2.0 * X.col(0).array() - X.col(1).array() * X.col(0).array();
  const CondexpEstimate e = condexp_lsmc(y, X, RegressionBasis::polynomial({0, 1}, 2));
  CHECK((e.fitted - y).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(e.diagnostics.r_squared == doctest::Approx(1.0));
}

TEST_CASE("projection is idempotent and satisfies the tower property") {
  const Eigen::MatrixXd X = gaussian(2, 5000, 2);
  Eigen::MatrixXd y(5000, 1);
  y.col(0) = (X.col(0).array() * 1.3).sin() + X.col(1).array().cube();
  const RegressionBasis fine = RegressionBasis::polynomial({0, 1}, 3);
  const RegressionBasis coarse = RegressionBasis::polynomial({0}, 1);
  const CondexpEstimate once = condexp_lsmc(y, X, fine);
  const CondexpEstimate twice = condexp_lsmc(once.fitted, X, fine);
  CHECK((once.fitted - twice.fitted).cwiseAbs().maxCoeff() < 1e-9);
  const CondexpEstimate direct = condexp_lsmc(y, X, coarse);
  const CondexpEstimate nested = condexp_lsmc(once.fitted, X, coarse);
  CHECK((direct.fitted - nested.fitted).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("constant targets short-circuit and degenerate columns are dropped") {
  Eigen::MatrixXd X = gaussian(3, 500, 2);
  X.col(1).setConstant(2.0);
  const Eigen::MatrixXd y = Eigen::MatrixXd::Constant(500, 1, 0.7);
  const CondexpEstimate c = condexp_lsmc(y, X, RegressionBasis::polynomial({0, 1}, 2));
  CHECK(c.diagnostics.short_circuit);
  CHECK((c.fitted.array() == 0.7).all());
  Eigen::MatrixXd z(500, 1);
  z.col(0) = X.col(0);
  const CondexpEstimate d = condexp_lsmc(z, X, RegressionBasis::polynomial({0, 1}, 2));
  CHECK(d.diagnostics.effective_size == 3);
  CHECK(d.diagnostics.basis_size == 6);
}

TEST_CASE("too few samples for the basis") {
  const Eigen::MatrixXd X = gaussian(4, 12, 2);
  const Eigen::MatrixXd y = X.col(0);
  try {
    condexp_lsmc(y, X, RegressionBasis::polynomial({0, 1}, 2));
    FAIL("expected Underdetermined");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Underdetermined);
  }
}

TEST_CASE("anchors measurable later than tau are rejected") {
  const Eigen::MatrixXd X = gaussian(5, 100, 1);
  CHECK(condexp_anchor(X, 1.0, 1.0, X, RegressionBasis::polynomial({0}, 1)).fitted == X);
  try {
    condexp_anchor(X, 1.5, 1.0, X, RegressionBasis::polynomial({0}, 1));
    FAIL("expected AdaptednessViolation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AdaptednessViolation);
  }
}

TEST_CASE("martingale-zero check detects a drift") {
  const Eigen::MatrixXd X = gaussian(6, 20000, 1);
  const ItoZeroCheck ok = condexp_ito_zero(X, 1.0);
  CHECK(ok.pass);
  CHECK(ok.zeros.isZero(0.0));
  const Eigen::MatrixXd biased = (X.array() + 0.1).matrix();
  CHECK_FALSE(condexp_ito_zero(biased, 1.0).pass);
}
