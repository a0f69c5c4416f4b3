#include "lpm/ladder.hpp"

#include "lpm/error.hpp"

#include <algorithm>
#include <limits>

namespace lpm {

std::vector<double> default_ladder() { return {1e2, 1e3, 1e4, 1e5, 1e6}; }

void validate_ladder(const std::vector<double>& lambdas) {
  if (lambdas.size() < 2) throw Error(ErrorCode::ConfigError, "lambda ladder needs at least two rungs");
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > 0)) throw Error(ErrorCode::NonpositiveLambda, "ladder rung must be positive");
    if (i > 0 && !(lambdas[i] > lambdas[i - 1]))
      throw Error(ErrorCode::ConfigError, "lambda ladder must be strictly increasing");
  }
}

LadderResult richardson_extrapolate(const std::vector<double>& lambdas,
                                    const std::function<Eigen::VectorXd(double)>& f,
                                    double rel_tol) {
  validate_ladder(lambdas);
  const std::size_t n = lambdas.size();
  LadderResult r;
  r.diagnostics.lambdas = lambdas;
  r.diagnostics.tolerance = rel_tol;
  std::vector<double> h(n);
  for (std::size_t i = 0; i < n; ++i) {
    h[i] = 1.0 / lambdas[i];
    r.values.push_back(f(lambdas[i]));
    if (i > 0) r.diagnostics.raw_differences.push_back((r.values[i] - r.values[i - 1]).norm());
  }
  // T[i][j]: polynomial through points i-j..i evaluated at h = 0.
  std::vector<std::vector<Eigen::VectorXd>> T(n);
  for (std::size_t i = 0; i < n; ++i) {
    T[i].push_back(r.values[i]);
    for (std::size_t j = 1; j <= i; ++j) {
      const double hl = h[i - j], hr = h[i];
      T[i].push_back((hl * T[i][j - 1] - hr * T[i - 1][j - 1]) / (hl - hr));
    }
    r.extrapolants.push_back(T[i][i]);
  }
  r.limit = T[n - 1][n - 1];
  const double gap = (T[n - 1][n - 1] - T[n - 1][n - 2]).norm();
  const double scale = r.limit.norm();
  r.diagnostics.cauchy_gap = scale > 0 ? gap / scale : gap;
  r.diagnostics.converged = gap <= rel_tol * std::max(scale, std::numeric_limits<double>::min());
  return r;
}

}  // namespace lpm
