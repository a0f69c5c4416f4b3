#include "lpm/validate/oracles.hpp"

#include "lpm/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>

namespace lpm {

OracleResult compare(std::string oracle, std::vector<double> reference, std::vector<double> observed,
                     double tolerance) {
  OracleResult r;
  r.oracle = std::move(oracle);
  r.tolerance = tolerance;
  if (reference.size() != observed.size()) throw Error(ErrorCode::ConfigError, "oracle comparison size mismatch");
  for (std::size_t i = 0; i < reference.size(); ++i)
    r.max_error = std::max(r.max_error, std::abs(reference[i] - observed[i]));
  r.reference = std::move(reference);
  r.observed = std::move(observed);
  r.pass = r.max_error <= tolerance;
  return r;
}

SlopeOracle linear_manifold_oracle(const Eigen::MatrixXd& A_u, const Eigen::MatrixXd& A_s, const Eigen::MatrixXd& B) {
  const Eigen::Index nu = A_u.rows(), ns = A_s.rows();
  if (A_u.cols() != nu || A_s.cols() != ns || B.rows() != nu + ns || B.cols() != nu + ns)
    throw Error(ErrorCode::ConfigError, "linear oracle: inconsistent block sizes");
  const Eigen::MatrixXd Luu = A_u + B.topLeftCorner(nu, nu);
  const Eigen::MatrixXd Lus = B.topRightCorner(nu, ns);
  const Eigen::MatrixXd Lsu = B.bottomLeftCorner(ns, nu);
  const Eigen::MatrixXd Lss = A_s + B.bottomRightCorner(ns, ns);

  const Eigen::VectorXcd eu = Luu.eigenvalues();
  const Eigen::VectorXcd es = Lss.eigenvalues();
  double sep = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < eu.size(); ++i)
    for (Eigen::Index j = 0; j < es.size(); ++j) sep = std::min(sep, std::abs(eu(i) - es(j)));
  if (!(sep > 1e-10)) throw Error(ErrorCode::NoSeparation, "unstable and stable spectra overlap");

  // vec(Lss M - M Luu) = (I (x) Lss - Luu^T (x) I) vec(M)
  const Eigen::Index d = nu * ns;
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index a = 0; a < nu; ++a)
    for (Eigen::Index b = 0; b < nu; ++b) {
      if (a == b) K.block(a * ns, b * ns, ns, ns) += Lss;
      K.block(a * ns, b * ns, ns, ns) -= Luu(b, a) * Eigen::MatrixXd::Identity(ns, ns);
    }
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
  if (!lu.isInvertible()) throw Error(ErrorCode::NoSeparation, "Sylvester operator is singular");

  SlopeOracle out;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(ns, nu);
  auto residual = [&](const Eigen::MatrixXd& X) { return (Lss * X - X * Luu - X * Lus * X + Lsu).norm(); };
  const double omega = 0.5;
  for (std::size_t it = 1; it <= 10000; ++it) {
    const Eigen::MatrixXd rhs = M * Lus * M - Lsu;
    const Eigen::VectorXd v = lu.solve(Eigen::Map<const Eigen::VectorXd>(rhs.data(), d));
    const Eigen::MatrixXd next = Eigen::Map<const Eigen::MatrixXd>(v.data(), ns, nu);
    M = (1.0 - omega) * M + omega * next;
    out.iterations = it;
    if (residual(M) < 1e-13 * std::max(1.0, Lsu.norm()) || (Lus.norm() == 0.0 && (M - next).norm() == 0.0)) break;
    if (!M.allFinite()) throw Error(ErrorCode::NoSeparation, "slope iteration diverged");
  }
  out.M = M;
  out.residual = residual(M);
  if (!(out.residual < 1e-10)) throw Error(ErrorCode::NoSeparation, "slope iteration did not reach the residual target");
  return out;
}

DeterministicGraph deterministic_lp_oracle(const SpectralProblem& p, const Eigen::VectorXd& x, double tau,
                                           double T_back, double dt, double tol, std::size_t max_iter) {
  if (p.noise.kind != NoiseKind::Zero) throw Error(ErrorCode::ConfigError, "deterministic oracle needs zero noise");
  const auto m = static_cast<Eigen::Index>(p.dim());
  const auto N = static_cast<Eigen::Index>(std::llround(T_back / dt));
  if (N < 1) throw Error(ErrorCode::ConfigError, "oracle window too short");
  const Eigen::VectorXd lam = p.eigenvalues;
  std::vector<char> uns(static_cast<std::size_t>(m), 0);
  for (std::size_t k : p.unstable_modes) uns[k] = 1;
  auto time = [&](Eigen::Index j) { return tau - static_cast<double>(N - j) * dt; };

  // Path stored as columns, node j at time tau - (N - j) dt.
  Eigen::MatrixXd xi = Eigen::MatrixXd::Zero(m, N + 1);
  for (Eigen::Index j = 0; j <= N; ++j)
    for (Eigen::Index k = 0; k < m; ++k)
      if (uns[static_cast<std::size_t>(k)]) xi(k, j) = std::exp(lam(k) * (time(j) - tau)) * x(k);

  DeterministicGraph out;
  Eigen::MatrixXd f(m, N + 1), next(m, N + 1);
  for (std::size_t it = 1; it <= max_iter; ++it) {
    for (Eigen::Index j = 0; j <= N; ++j) f.col(j) = p.drift(Eigen::VectorXd(xi.col(j)));
    for (Eigen::Index j = 0; j <= N; ++j) {
      for (Eigen::Index k = 0; k < m; ++k) {
        double acc = 0.0;
        if (uns[static_cast<std::size_t>(k)]) {
          // int_t^tau e^{lambda (t - r)} f(r) dr
          for (Eigen::Index i = j; i <= N; ++i) {
            const double w = (i == j || i == N) ? 0.5 * dt : dt;
            if (j == N) break;
            acc += w * std::exp(lam(k) * (time(j) - time(i))) * f(k, i);
          }
          next(k, j) = std::exp(lam(k) * (time(j) - tau)) * x(k) - acc;
        } else {
          // int_{tau - T}^t e^{lambda (t - r)} f(r) dr
          for (Eigen::Index i = 0; i <= j; ++i) {
            const double w = (i == 0 || i == j) ? 0.5 * dt : dt;
            if (j == 0) break;
            acc += w * std::exp(lam(k) * (time(j) - time(i))) * f(k, i);
          }
          next(k, j) = acc;
        }
      }
    }
    double d = 0.0;
    for (Eigen::Index j = 0; j <= N; ++j) d = std::max(d, std::exp(-p.gamma * time(j)) * (next.col(j) - xi.col(j)).norm());
    xi.swap(next);
    out.iterations = it;
    out.last_difference = d;
    if (d <= tol) break;
  }
  out.h = Eigen::VectorXd::Zero(m);
  for (std::size_t k : p.stable_modes) out.h(static_cast<Eigen::Index>(k)) = xi(static_cast<Eigen::Index>(k), N);
  return out;
}

double moment_oracle(double lambda, double s, double u0, double t) { return u0 * u0 * std::exp((2 * lambda + s * s) * t); }

double mean_oracle(double lambda, double u0, double t) { return u0 * std::exp(lambda * t); }

double wiener_conditional_mean(double w_t) { return w_t; }

double wiener_conditional_second_moment(double w_t, double t, double tau) { return w_t * w_t + (tau - t); }

double regularization_error_oracle(const SpectralProblem& p, double lambda, const Eigen::VectorXd& g) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    const double c = p.eigenvalues(k) / (lambda - p.eigenvalues(k)) * g(k);
    s += c * c;
  }
  return std::sqrt(s);
}

}  // namespace lpm
