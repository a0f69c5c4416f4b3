#pragma once

#include "lpm/spectral_problem.hpp"

#include <Eigen/Dense>

#include <vector>

namespace lpm::testing {

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

inline Eigen::MatrixXd mat2(double a, double b, double c, double d) {
  Eigen::MatrixXd m(2, 2);
  m << a, b, c, d;
  return m;
}

// Two modes with rates (lu, ls), linear coupling B and optional diagonal linear noise.
inline SpectralProblem two_mode(double lu, double ls, const Eigen::MatrixXd& B, double noise_slope, double alpha,
                                double beta, double gamma, double zeta) {
  ProblemConfig c;
  c.eigenvalues = {lu, ls};
  c.alpha = alpha;
  c.beta = beta;
  c.gamma = gamma;
  c.zeta = zeta;
  c.nonlinearity = B.isZero(0.0) ? NonlinearityModel::zero() : NonlinearityModel::linear(B);
  if (noise_slope != 0.0) c.noise = NoiseModel::diagonal_linear(vec({noise_slope, noise_slope}), vec({1.0, 1.0}));
  return build_problem(c);
}

// Unit-gap 2D model with rates (1, -1): gamma = 0.5, zeta = -0.5.
inline SpectralProblem unit_pair(const Eigen::MatrixXd& B, double noise_slope = 0.0) {
  return two_mode(1.0, -1.0, B, noise_slope, 1.0, -1.0, 0.5, -0.5);
}

// Rates (1, -4) with gamma = 0 and zeta = -2.
inline SpectralProblem wide_pair(const Eigen::MatrixXd& B, double noise_slope = 0.0) {
  return two_mode(1.0, -4.0, B, noise_slope, 1.0, -4.0, 0.0, -2.0);
}

// Scalar stable model dU = lambda U dt + s U dW.
inline SpectralProblem scalar_gbm(double lambda, double s) {
  ProblemConfig c;
  c.eigenvalues = {lambda};
  c.alpha = 1.0;
  c.beta = lambda;
  c.gamma = 0.5;
  c.zeta = 0.5 * (lambda + 0.5);
  if (s != 0.0) c.noise = NoiseModel::diagonal_linear(vec({s}), vec({1.0}));
  return build_problem(c);
}

inline SpectralProblem neumann(std::size_t m, double g0 = 0.0, double g1 = 0.0, double g2 = 0.0) {
  ProblemConfig c;
  const double pi2 = 9.869604401089358;
  for (std::size_t k = 0; k < m; ++k) c.eigenvalues.push_back((0.5 - static_cast<double>(k * k)) * pi2);
  c.alpha = 0.5 * pi2;
  c.beta = -0.5 * pi2;
  c.gamma = 0.0;
  c.zeta = -0.25 * pi2;
  c.basis = "neumann_cosine";
  c.nonlinearity = NonlinearityModel::boundary_example(g0, g1, g2, 1.0);
  return build_problem(c);
}

}  // namespace lpm::testing
