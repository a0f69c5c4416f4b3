#include "lpm/condexp.hpp"

#include "lpm/error.hpp"
#include "lpm/parallel.hpp"
#include "lpm/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace lpm {

const char* to_string(BasisFamily f) {
  return f == BasisFamily::Polynomial ? "polynomial" : "tensor_hermite";
}

RegressionBasis::RegressionBasis(BasisFamily family, std::vector<BasisGroup> groups)
    : family_(family), groups_(std::move(groups)) {
  for (const auto& g : groups_)
    if (g.degree < 0) throw Error(ErrorCode::ConfigError, "basis degree must be >= 0");
}

RegressionBasis RegressionBasis::polynomial(std::vector<std::size_t> coordinates, int degree) {
  return RegressionBasis(BasisFamily::Polynomial, {BasisGroup{std::move(coordinates), degree}});
}

RegressionBasis RegressionBasis::tensor_hermite(std::vector<std::size_t> coordinates, int degree) {
  return RegressionBasis(BasisFamily::TensorHermite, {BasisGroup{std::move(coordinates), degree}});
}

RegressionBasis RegressionBasis::default_for(const SpectralProblem& p) {
  std::vector<BasisGroup> groups;
  groups.push_back({p.unstable_modes, 2});
  if (!p.stable_modes.empty()) groups.push_back({p.stable_modes, 1});
  return RegressionBasis(BasisFamily::Polynomial, std::move(groups));
}

namespace {

void enumerate(const std::vector<std::size_t>& coords, std::size_t pos, int budget, bool total, int degree,
               RegressionBasis::MultiIndex& cur, std::set<RegressionBasis::MultiIndex>& out) {
  if (pos == coords.size()) {
    out.insert(cur);
    return;
  }
  const int top = total ? budget : degree;
  for (int e = 0; e <= top; ++e) {
    cur[coords[pos]] += e;
    enumerate(coords, pos + 1, budget - e, total, degree, cur, out);
    cur[coords[pos]] -= e;
  }
}

int total_degree(const RegressionBasis::MultiIndex& m) {
  int s = 0;
  for (int e : m) s += e;
  return s;
}

double hermite(int k, double x) {
  if (k == 0) return 1.0;
  double h0 = 1.0, h1 = x;
  for (int j = 1; j < k; ++j) {
    const double h2 = x * h1 - j * h0;
    h0 = h1;
    h1 = h2;
  }
  return h1;
}

// Basis bound to a sample design: standardized coordinates, degenerate columns removed.
struct BoundBasis {
  BasisFamily family = BasisFamily::Polynomial;
  std::vector<RegressionBasis::MultiIndex> terms;
  std::vector<double> mean, scale;
  std::size_t nominal = 0;

  BoundBasis(const RegressionBasis& basis, const Eigen::Ref<const Eigen::MatrixXd>& Z) : family(basis.family()) {
    const auto n = static_cast<std::size_t>(Z.rows());
    const auto c = static_cast<std::size_t>(Z.cols());
    auto all = basis.terms(c);
    nominal = all.size();
    mean.assign(c, 0.0);
    scale.assign(c, 1.0);
    std::vector<char> degenerate(c, 0);
    for (std::size_t j = 0; j < c; ++j) {
      const auto col = static_cast<Eigen::Index>(j);
      const double mu = ordered_sample_sum(n, [&](std::size_t i) { return Z(static_cast<Eigen::Index>(i), col); }) /
                        static_cast<double>(n);
      const double var = ordered_sample_sum(n, [&](std::size_t i) {
                           const double d = Z(static_cast<Eigen::Index>(i), col) - mu;
                           return d * d;
                         }) /
                         static_cast<double>(n);
      mean[j] = mu;
      const double sd = std::sqrt(var);
      if (!(sd > 1e-12 * std::max(1.0, std::abs(mu)))) {
        degenerate[j] = 1;
      } else {
        scale[j] = 1.0 / sd;
      }
    }
    for (auto& m : all) {
      bool keep = true;
      for (std::size_t j = 0; j < c; ++j)
        if (m[j] > 0 && degenerate[j]) keep = false;
      if (keep) terms.push_back(std::move(m));
    }
  }

  std::size_t size() const { return terms.size(); }

  void eval(const Eigen::Ref<const Eigen::MatrixXd>& Z, Eigen::Index row, double* out) const {
    const std::size_t c = mean.size();
    double zs[64];
    std::vector<double> heap;
    double* z = zs;
    if (c > 64) {
      heap.resize(c);
      z = heap.data();
    }
    for (std::size_t j = 0; j < c; ++j) z[j] = (Z(row, static_cast<Eigen::Index>(j)) - mean[j]) * scale[j];
    for (std::size_t k = 0; k < terms.size(); ++k) {
      double v = 1.0;
      for (std::size_t j = 0; j < c; ++j) {
        const int e = terms[k][j];
        if (e == 0) continue;
        if (family == BasisFamily::Polynomial) {
          for (int r = 0; r < e; ++r) v *= z[j];
        } else {
          v *= hermite(e, z[j]);
        }
      }
      out[k] = v;
    }
  }
};

bool rows_identical(const Eigen::Ref<const Eigen::MatrixXd>& Y) {
  for (Eigen::Index i = 1; i < Y.rows(); ++i)
    for (Eigen::Index j = 0; j < Y.cols(); ++j)
      if (Y(i, j) != Y(0, j)) return false;
  return true;
}

}  // namespace

std::vector<RegressionBasis::MultiIndex> RegressionBasis::terms(std::size_t n_columns) const {
  std::set<MultiIndex> found;
  MultiIndex zero(n_columns, 0);
  found.insert(zero);
  for (const auto& g : groups_) {
    for (std::size_t c : g.coordinates)
      if (c >= n_columns) {
        std::ostringstream os;
        os << "basis coordinate " << c << " exceeds conditioning width " << n_columns;
        throw Error(ErrorCode::ConfigError, os.str());
      }
    MultiIndex cur(n_columns, 0);
    enumerate(g.coordinates, 0, g.degree, family_ == BasisFamily::Polynomial, g.degree, cur, found);
  }
  std::vector<MultiIndex> out(found.begin(), found.end());
  std::stable_sort(out.begin(), out.end(), [](const MultiIndex& a, const MultiIndex& b) {
    const int da = total_degree(a), db = total_degree(b);
    if (da != db) return da < db;
    return a > b;
  });
  return out;
}

CondexpEstimate condexp_lsmc(const Eigen::Ref<const Eigen::MatrixXd>& target,
                             const Eigen::Ref<const Eigen::MatrixXd>& conditioning, const RegressionBasis& basis,
                             const CondexpOptions& opts) {
  const auto n = static_cast<std::size_t>(target.rows());
  const Eigen::Index d = target.cols();
  if (n == 0) throw Error(ErrorCode::Underdetermined, "empty sample");
  if (conditioning.rows() != target.rows())
    throw Error(ErrorCode::GridMismatch, "target and conditioning sample counts differ");

  CondexpEstimate est;
  auto& diag = est.diagnostics;
  diag.n_samples = n;

  if (rows_identical(target)) {
    est.fitted = target;
    diag.basis_size = basis.size(static_cast<std::size_t>(conditioning.cols()));
    diag.effective_size = 1;
    diag.short_circuit = true;
    return est;
  }

  const BoundBasis bb(basis, conditioning);
  const std::size_t p = bb.size();
  diag.basis_size = bb.nominal;
  diag.effective_size = p;

  const auto pi = static_cast<Eigen::Index>(p);
  if (p > 1 && n <= 3 * p) {
    std::ostringstream os;
    os << n << " samples for " << p << " basis functions (need more than " << 3 * p << ")";
    throw Error(ErrorCode::Underdetermined, os.str());
  }

  // Ordered chunk reduction of Phi^T Phi, Phi^T Y and the target moments.
  const std::size_t nc = chunk_count(n);
  std::vector<Eigen::MatrixXd> G_parts(nc), R_parts(nc);
  std::vector<Eigen::RowVectorXd> S_parts(nc);
  for_each_chunk(n, [&](std::size_t c, std::size_t b, std::size_t e) {
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(pi, pi);
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(pi, d);
    Eigen::RowVectorXd S = Eigen::RowVectorXd::Zero(d);
    Eigen::VectorXd phi(pi);
    for (std::size_t i = b; i < e; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      bb.eval(conditioning, r, phi.data());
      G.selfadjointView<Eigen::Lower>().rankUpdate(phi);
      R.noalias() += phi * target.row(r);
      S += target.row(r);
    }
    G_parts[c] = std::move(G);
    R_parts[c] = std::move(R);
    S_parts[c] = std::move(S);
  });
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(pi, pi);
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(pi, d);
  Eigen::RowVectorXd S = Eigen::RowVectorXd::Zero(d);
  for (std::size_t c = 0; c < nc; ++c) {
    G += G_parts[c];
    R += R_parts[c];
    S += S_parts[c];
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  G = G.selfadjointView<Eigen::Lower>();
  G *= inv_n;
  R *= inv_n;
  const Eigen::RowVectorXd mean_y = S * inv_n;

  Eigen::MatrixXd beta;
  if (p == 1) {
    beta = R / G(0, 0);
    diag.condition_number = 1.0;
  } else {
    Eigen::VectorXd D = G.diagonal().cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd Gs = D.asDiagonal() * G * D.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Gs, Eigen::EigenvaluesOnly);
    const double lmax = es.eigenvalues().maxCoeff();
    const double lmin = es.eigenvalues().minCoeff();
    diag.condition_number = lmin > 0 ? lmax / lmin : std::numeric_limits<double>::infinity();
    if (diag.condition_number > opts.ridge_trigger) {
      if (opts.allow_ridge) {
        diag.ridge = opts.ridge_scale * Gs.trace() / static_cast<double>(p);
        Gs.diagonal().array() += diag.ridge;
      } else if (diag.condition_number > opts.ill_conditioned) {
        std::ostringstream os;
        os << "design condition number " << diag.condition_number;
        throw Error(ErrorCode::IllConditionedDesign, os.str());
      }
    }
    const Eigen::MatrixXd rhs = D.asDiagonal() * R;
    beta = D.asDiagonal() * Eigen::MatrixXd(Gs.ldlt().solve(rhs));
  }
  const double rn = R.norm();
  diag.residual_norm = rn > 0 ? (R - G * beta).norm() / rn : 0.0;

  est.fitted.resize(static_cast<Eigen::Index>(n), d);
  std::vector<double> ss_res(nc, 0.0), ss_tot(nc, 0.0);
  for_each_chunk(n, [&](std::size_t c, std::size_t b, std::size_t e) {
    Eigen::RowVectorXd phi(pi);
    double sr = 0.0, st = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      bb.eval(conditioning, r, phi.data());
      est.fitted.row(r).noalias() = phi * beta;
      sr += (target.row(r) - est.fitted.row(r)).squaredNorm();
      st += (target.row(r) - mean_y).squaredNorm();
    }
    ss_res[c] = sr;
    ss_tot[c] = st;
  });
  double sr = 0.0, st = 0.0;
  for (std::size_t c = 0; c < nc; ++c) {
    sr += ss_res[c];
    st += ss_tot[c];
  }
  diag.r_squared = st > 0 ? 1.0 - sr / st : 1.0;
  return est;
}

CondexpEstimate condexp_anchor(const Eigen::Ref<const Eigen::MatrixXd>& x, double t, double tau,
                               const Eigen::Ref<const Eigen::MatrixXd>& conditioning, const RegressionBasis& basis,
                               const CondexpOptions& opts) {
  if (t > tau) throw Error(ErrorCode::AdaptednessViolation, "anchor conditioning time exceeds its measurability time");
  if (t == tau || rows_identical(x)) {
    CondexpEstimate est;
    est.fitted = x;
    est.diagnostics.n_samples = static_cast<std::size_t>(x.rows());
    est.diagnostics.short_circuit = true;
    est.diagnostics.effective_size = 1;
    return est;
  }
  return condexp_lsmc(x, conditioning, basis, opts);
}

ItoZeroCheck condexp_ito_zero(const Eigen::Ref<const Eigen::MatrixXd>& raw, double window, bool adapted,
                              const Eigen::Ref<const Eigen::MatrixXd>& conditioning, const RegressionBasis& basis) {
  if (!adapted) throw Error(ErrorCode::AdaptednessViolation, "integrand flagged as not adapted");
  if (window < 0) throw Error(ErrorCode::ConfigError, "window length must be >= 0");
  ItoZeroCheck out;
  out.zeros = Eigen::MatrixXd::Zero(raw.rows(), raw.cols());
  out.window = window;
  const auto n = static_cast<std::size_t>(raw.rows());
  if (window == 0 || n < 2) return out;
  if (conditioning.rows() != raw.rows()) throw Error(ErrorCode::GridMismatch, "conditioning sample count differs");

  const BoundBasis bb(basis, conditioning);
  const std::size_t p = bb.size();
  Eigen::MatrixXd phi(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for_each_chunk(n, [&](std::size_t, std::size_t b, std::size_t e) {
    std::vector<double> row(p);
    for (std::size_t i = b; i < e; ++i) {
      bb.eval(conditioning, static_cast<Eigen::Index>(i), row.data());
      for (std::size_t k = 0; k < p; ++k) phi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = row[k];
    }
  });
  const double nn = static_cast<double>(n);
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(p); ++k) {
      auto term = [&](std::size_t i) {
        const auto r = static_cast<Eigen::Index>(i);
        return raw(r, j) * phi(r, k);
      };
      const double mean = ordered_sample_sum(n, term) / nn;
      const double var = ordered_sample_sum(n, [&](std::size_t i) {
                           const double v = term(i) - mean;
                           return v * v;
                         }) /
                         (nn - 1.0);
      const double se = std::sqrt(var / nn);
      double z = 0.0;
      if (se > 0) {
        z = std::abs(mean) / se;
      } else if (mean != 0.0) {
        z = std::numeric_limits<double>::infinity();
      }
      out.z_scores.push_back(z);
      out.max_abs_z = std::max(out.max_abs_z, z);
    }
  }
  out.n_tests = out.z_scores.size();
  out.pass = out.max_abs_z <= 4.0;
  return out;
}

ItoZeroCheck condexp_ito_zero(const Eigen::Ref<const Eigen::MatrixXd>& raw, double window, bool adapted) {
  const Eigen::MatrixXd none(raw.rows(), 0);
  return condexp_ito_zero(raw, window, adapted, none, RegressionBasis(BasisFamily::Polynomial, {}));
}

}  // namespace lpm
