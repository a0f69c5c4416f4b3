#pragma once

#include "lpm/spectral_problem.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

namespace lpm {

enum class BasisFamily { Polynomial, TensorHermite };

const char* to_string(BasisFamily f);

// Coordinates are column indices of the conditioning matrix.
struct BasisGroup {
  std::vector<std::size_t> coordinates;
  int degree = 1;
};

// Union over groups of the group's multi-indices: total degree <= d for
// Polynomial, every exponent <= d for TensorHermite. Functions are evaluated
// on standardized coordinates.
class RegressionBasis {
 public:
  using MultiIndex = std::vector<int>;  // exponent per conditioning column

  RegressionBasis() = default;
  RegressionBasis(BasisFamily family, std::vector<BasisGroup> groups);

  static RegressionBasis polynomial(std::vector<std::size_t> coordinates, int degree);
  static RegressionBasis tensor_hermite(std::vector<std::size_t> coordinates, int degree);
  // Total degree 2 over the unstable modes plus degree 1 over the stable modes.
  static RegressionBasis default_for(const SpectralProblem& p);

  BasisFamily family() const { return family_; }
  const std::vector<BasisGroup>& groups() const { return groups_; }
  // Multi-indices over columns 0..n_columns-1, constant first.
  std::vector<MultiIndex> terms(std::size_t n_columns) const;
  std::size_t size(std::size_t n_columns) const { return terms(n_columns).size(); }

 private:
  BasisFamily family_ = BasisFamily::Polynomial;
  std::vector<BasisGroup> groups_;
};

struct CondexpOptions {
  bool allow_ridge = true;
  double ridge_trigger = 1e8;     // Jacobi-scaled condition number
  double ridge_scale = 1e-10;     // times trace / p of the scaled Gram matrix
  double ill_conditioned = 1e12;  // threshold when ridge is disallowed
};

struct RegressionDiagnostics {
  std::size_t n_samples = 0;
  std::size_t basis_size = 0;      // nominal
  std::size_t effective_size = 0;  // after dropping degenerate coordinates
  double condition_number = 1.0;
  double ridge = 0.0;
  double r_squared = 1.0;
  double residual_norm = 0.0;  // relative normal-equation residual
  bool short_circuit = false;  // target constant across samples
};

struct CondexpEstimate {
  Eigen::MatrixXd fitted;  // n_samples x target columns
  RegressionDiagnostics diagnostics;
};

// Least-squares projection of each target column onto the basis evaluated at
// the conditioning coordinates. Rows are samples.
CondexpEstimate condexp_lsmc(const Eigen::Ref<const Eigen::MatrixXd>& target,
                             const Eigen::Ref<const Eigen::MatrixXd>& conditioning, const RegressionBasis& basis,
                             const CondexpOptions& opts = {});

// E[x | F_t] for an anchor measurable at tau >= t. Deterministic anchors and
// t == tau return x unchanged.
CondexpEstimate condexp_anchor(const Eigen::Ref<const Eigen::MatrixXd>& x, double t, double tau,
                               const Eigen::Ref<const Eigen::MatrixXd>& conditioning, const RegressionBasis& basis,
                               const CondexpOptions& opts = {});

struct ItoZeroCheck {
  Eigen::MatrixXd zeros;             // the conditional expectation estimate
  std::vector<double> z_scores;      // |mean| / standard error per test
  double max_abs_z = 0.0;
  std::size_t n_tests = 0;
  bool pass = true;                  // every |z| <= 4
  double window = 0.0;
};

// Conditional expectation of an adapted Ito integral over a window: zero.
// raw holds per-sample integral values. The check tests that mean(raw * phi)
// is zero within 4 standard errors for every basis function phi of the
// conditioning coordinates (only the constant if conditioning has no columns).
ItoZeroCheck condexp_ito_zero(const Eigen::Ref<const Eigen::MatrixXd>& raw, double window, bool adapted,
                              const Eigen::Ref<const Eigen::MatrixXd>& conditioning, const RegressionBasis& basis);
ItoZeroCheck condexp_ito_zero(const Eigen::Ref<const Eigen::MatrixXd>& raw, double window, bool adapted = true);

}  // namespace lpm
