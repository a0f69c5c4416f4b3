#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace lpm {

// Default regularization ladder for lambda -> infinity limits.
std::vector<double> default_ladder();

struct LadderDiagnostics {
  std::vector<double> lambdas;
  // Norms of successive raw differences |v(l_{i+1}) - v(l_i)|.
  std::vector<double> raw_differences;
  // Gap between the last two extrapolants, relative to the final one.
  double cauchy_gap = 0.0;
  double tolerance = 1e-6;
  bool converged = false;
};

struct LadderResult {
  Eigen::VectorXd limit;
  std::vector<Eigen::VectorXd> values;
  std::vector<Eigen::VectorXd> extrapolants;  // Neville diagonal T(i,i)
  LadderDiagnostics diagnostics;
};

// Polynomial (Richardson/Neville) extrapolation of f(lambda) to h = 1/lambda = 0.
LadderResult richardson_extrapolate(const std::vector<double>& lambdas,
                                    const std::function<Eigen::VectorXd(double)>& f,
                                    double rel_tol = 1e-6);

void validate_ladder(const std::vector<double>& lambdas);

}  // namespace lpm
