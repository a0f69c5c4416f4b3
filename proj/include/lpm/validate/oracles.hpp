#pragma once

// Reference values computed without the fixed-point solvers. This header and
// its implementation depend on the problem layer and Eigen only.

#include "lpm/spectral_problem.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace lpm {

struct OracleResult {
  std::string oracle;
  std::vector<double> reference;
  std::vector<double> observed;
  double tolerance = 0.0;
  double max_error = 0.0;
  bool pass = false;
};

OracleResult compare(std::string oracle, std::vector<double> reference, std::vector<double> observed,
                     double tolerance);

struct SlopeOracle {
  Eigen::MatrixXd M;  // graph slope: complementary coordinates = M * anchored coordinates
  double residual = 0.0;
  std::size_t iterations = 0;
};

// Invariant graph y = M x of the linear flow with generator diag(A_u, A_s) + B,
// B given in [u; s] block order. Damped fixed point on the Sylvester form
// A_ss M - M A_uu = M A_us M - A_su.
SlopeOracle linear_manifold_oracle(const Eigen::MatrixXd& A_u, const Eigen::MatrixXd& A_s, const Eigen::MatrixXd& B);

struct DeterministicGraph {
  Eigen::VectorXd h;  // complementary block at tau, full coordinates
  std::size_t iterations = 0;
  double last_difference = 0.0;
};

// Single-path backward fixed point by dense trapezoidal quadrature on
// [tau - T_back, tau]. Requires zero noise.
DeterministicGraph deterministic_lp_oracle(const SpectralProblem& p, const Eigen::VectorXd& x, double tau,
                                           double T_back, double dt, double tol, std::size_t max_iter = 200);

// Second moment of dU = lambda U dt + s U dW.
double moment_oracle(double lambda, double s, double u0, double t);
// Mean of the same equation (also exact for the exponential Euler scheme).
double mean_oracle(double lambda, double u0, double t);

// Gaussian conditional moments of a standard Wiener process.
double wiener_conditional_mean(double w_t);
double wiener_conditional_second_moment(double w_t, double t, double tau);

// |lambda R_lambda g - g| for interior data g in X0 modes, by the modal formula.
double regularization_error_oracle(const SpectralProblem& p, double lambda, const Eigen::VectorXd& g);

}  // namespace lpm
