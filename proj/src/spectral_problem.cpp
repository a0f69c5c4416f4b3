#include "lpm/spectral_problem.hpp"

#include "lpm/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace lpm {

const char* to_string(Block b) {
  switch (b) {
    case Block::Unstable: return "unstable";
    case Block::Stable: return "stable";
    case Block::Full: return "full";
  }
  return "?";
}

const char* to_string(Side s) { return s == Side::Unstable ? "unstable" : "stable"; }

const char* to_string(NonlinearityKind k) {
  switch (k) {
    case NonlinearityKind::Zero: return "zero";
    case NonlinearityKind::Linear: return "linear";
    case NonlinearityKind::SaturatedPolynomial: return "saturated_polynomial";
    case NonlinearityKind::BoundaryExample: return "boundary_example";
    case NonlinearityKind::Custom: return "custom";
  }
  return "?";
}

const char* to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::Zero: return "zero";
    case NoiseKind::DiagonalLinear: return "diagonal_linear";
    case NoiseKind::Saturated: return "saturated";
  }
  return "?";
}

NonlinearityModel NonlinearityModel::zero() { return {}; }

NonlinearityModel NonlinearityModel::linear(Eigen::MatrixXd B) {
  NonlinearityModel n;
  n.kind = NonlinearityKind::Linear;
  n.matrix = std::move(B);
  return n;
}

NonlinearityModel NonlinearityModel::saturated_polynomial(std::vector<PolynomialTerm> terms, double radius) {
  NonlinearityModel n;
  n.kind = NonlinearityKind::SaturatedPolynomial;
  n.terms = std::move(terms);
  n.radius = radius;
  return n;
}

NonlinearityModel NonlinearityModel::boundary_example(double g0, double g1, double g2, double radius) {
  NonlinearityModel n;
  n.kind = NonlinearityKind::BoundaryExample;
  n.g0 = g0;
  n.g1 = g1;
  n.g2 = g2;
  n.radius = radius;
  return n;
}

NonlinearityModel NonlinearityModel::custom_field(VectorField f) {
  NonlinearityModel n;
  n.kind = NonlinearityKind::Custom;
  n.custom = std::move(f);
  return n;
}

NoiseModel NoiseModel::zero() { return {}; }

NoiseModel NoiseModel::diagonal_linear(Eigen::VectorXd slopes, Eigen::VectorXd weights) {
  NoiseModel n;
  n.kind = NoiseKind::DiagonalLinear;
  n.slopes = std::move(slopes);
  n.weights = std::move(weights);
  return n;
}

NoiseModel NoiseModel::saturated(Eigen::VectorXd slopes, Eigen::VectorXd weights, double radius) {
  NoiseModel n;
  n.kind = NoiseKind::Saturated;
  n.slopes = std::move(slopes);
  n.weights = std::move(weights);
  n.radius = radius;
  return n;
}

double neumann_trace_left(std::size_t k) { return k == 0 ? 1.0 : std::sqrt(2.0); }

double neumann_trace_right(std::size_t k) {
  if (k == 0) return 1.0;
  return (k % 2 == 0 ? 1.0 : -1.0) * std::sqrt(2.0);
}

namespace {

inline double clamp_r(double x, double r) { return std::clamp(x, -r, r); }

inline double ipow(double x, int p) {
  double r = 1.0;
  for (int i = 0; i < p; ++i) r *= x;
  return r;
}

double spectral_norm(const Eigen::MatrixXd& M) {
  if (M.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  return svd.singularValues()(0);
}

}  // namespace

void SpectralProblem::evaluate_raw(const double* u, double* interior, double& left, double& right) const {
  const std::size_t m = dim();
  left = 0.0;
  right = 0.0;
  switch (nonlinearity.kind) {
    case NonlinearityKind::Zero:
      std::fill(interior, interior + m, 0.0);
      return;
    case NonlinearityKind::Linear:
      for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += nonlinearity.matrix(i, j) * u[j];
        interior[i] = s;
      }
      return;
    case NonlinearityKind::SaturatedPolynomial:
      std::fill(interior, interior + m, 0.0);
      for (const auto& t : nonlinearity.terms)
        interior[t.target] += t.coefficient * ipow(clamp_r(u[t.source], nonlinearity.radius), t.power);
      return;
    case NonlinearityKind::BoundaryExample: {
      for (std::size_t i = 0; i < m; ++i) interior[i] = nonlinearity.g0 * u[i];
      const double mean = clamp_r(u[0], nonlinearity.radius);
      left = nonlinearity.g1 * mean;
      right = nonlinearity.g2 * mean;
      return;
    }
    case NonlinearityKind::Custom: {
      Eigen::VectorXd out = nonlinearity.custom(Eigen::Map<const Eigen::VectorXd>(u, static_cast<Eigen::Index>(m)));
      for (std::size_t i = 0; i < m; ++i) interior[i] = out(static_cast<Eigen::Index>(i));
      return;
    }
  }
}

void SpectralProblem::drift(const double* u, double* out) const {
  double left = 0.0, right = 0.0;
  evaluate_raw(u, out, left, right);
  if (left != 0.0 || right != 0.0) {
    const std::size_t m = dim();
    for (std::size_t k = 0; k < m; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      out[k] += left * boundary_loading(kk, 0) + right * boundary_loading(kk, 1);
    }
  }
}

Eigen::VectorXd SpectralProblem::drift(const Eigen::VectorXd& u) const {
  Eigen::VectorXd out(u.size());
  drift(u.data(), out.data());
  return out;
}

void SpectralProblem::diffusion_coefficients(const double* u, double* out) const {
  const std::size_t m = dim();
  switch (noise.kind) {
    case NoiseKind::Zero:
      std::fill(out, out + m, 0.0);
      return;
    case NoiseKind::DiagonalLinear:
      for (std::size_t k = 0; k < m; ++k) out[k] = noise.slopes(static_cast<Eigen::Index>(k)) * u[k];
      return;
    case NoiseKind::Saturated:
      for (std::size_t k = 0; k < m; ++k)
        out[k] = noise.slopes(static_cast<Eigen::Index>(k)) * clamp_r(u[k], noise.radius);
      return;
  }
}

void SpectralProblem::diffusion(const double* u, const double* dW, double* out) const {
  diffusion_coefficients(u, out);
  const std::size_t m = dim();
  for (std::size_t k = 0; k < m; ++k) out[k] *= dW[k];
}

double estimate_lipschitz(const VectorField& f, std::size_t dim, double scale, std::size_t n_pairs,
                          unsigned long long seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-scale, scale);
  std::normal_distribution<double> nrm(0.0, 1.0);
  const auto m = static_cast<Eigen::Index>(dim);
  double best = 0.0;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    Eigen::VectorXd u(m), v(m);
    for (Eigen::Index k = 0; k < m; ++k) u(k) = uni(rng);
    if (i % 2 == 0) {
      for (Eigen::Index k = 0; k < m; ++k) v(k) = uni(rng);
    } else {
      for (Eigen::Index k = 0; k < m; ++k) v(k) = u(k) + 1e-4 * scale * nrm(rng);
    }
    const double du = (u - v).norm();
    if (du == 0.0) continue;
    best = std::max(best, (f(u) - f(v)).norm() / du);
  }
  return 1.1 * best;
}

SpectralProblem build_problem(const ProblemConfig& cfg) {
  const std::size_t m = cfg.eigenvalues.size();
  if (m == 0) throw Error(ErrorCode::ConfigError, "problem needs at least one mode");
  for (double l : cfg.eigenvalues)
    if (!std::isfinite(l)) throw Error(ErrorCode::ConfigError, "eigenvalues must be finite");
  if (!(cfg.bound_K >= 1.0)) throw Error(ErrorCode::ConfigError, "bound_K must be >= 1");
  if (!(cfg.beta < cfg.zeta && cfg.zeta < cfg.gamma && cfg.gamma < cfg.alpha)) {
    std::ostringstream os;
    os << "need beta < zeta < gamma < alpha, got beta=" << cfg.beta << " zeta=" << cfg.zeta
       << " gamma=" << cfg.gamma << " alpha=" << cfg.alpha;
    throw Error(ErrorCode::OrderingViolation, os.str());
  }

  SpectralProblem p;
  p.config = cfg;
  p.eigenvalues = Eigen::Map<const Eigen::VectorXd>(cfg.eigenvalues.data(), static_cast<Eigen::Index>(m));
  p.alpha = cfg.alpha;
  p.beta = cfg.beta;
  p.gamma = cfg.gamma;
  p.zeta = cfg.zeta;
  p.bound_K = cfg.bound_K;
  p.basis = cfg.basis;
  p.ladder = cfg.ladder;
  p.unstable_mask_.assign(m, 0);

  if (cfg.unstable_modes) {
    for (std::size_t k : *cfg.unstable_modes) {
      if (k >= m) throw Error(ErrorCode::ConfigError, "unstable mode index out of range");
      if (p.unstable_mask_[k]) throw Error(ErrorCode::ConfigError, "duplicate unstable mode index");
      p.unstable_mask_[k] = 1;
    }
  } else {
    for (std::size_t k = 0; k < m; ++k) p.unstable_mask_[k] = cfg.eigenvalues[k] >= cfg.alpha ? 1 : 0;
  }
  for (std::size_t k = 0; k < m; ++k) {
    const double l = cfg.eigenvalues[k];
    const bool ok = p.unstable_mask_[k] ? l >= cfg.alpha : l <= cfg.beta;
    if (!ok) {
      std::ostringstream os;
      os << "mode " << k << " with rate " << l << " is not separated by (beta, alpha) = (" << cfg.beta << ", "
         << cfg.alpha << ")";
      throw Error(ErrorCode::SpectralGapViolation, os.str());
    }
    (p.unstable_mask_[k] ? p.unstable_modes : p.stable_modes).push_back(k);
  }

  if (p.basis != "abstract" && p.basis != "neumann_cosine")
    throw Error(ErrorCode::ConfigError, "unknown basis '" + p.basis + "'");
  p.boundary_loading = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), 2);
  if (p.basis == "neumann_cosine") {
    const double top = p.eigenvalues.maxCoeff();
    validate_ladder(p.ladder);
    if (p.ladder.front() <= top)
      throw Error(ErrorCode::LambdaInSpectrum, "ladder must lie above the largest eigenvalue");
    auto res = richardson_extrapolate(p.ladder, [&](double lam) {
      Eigen::VectorXd v(2 * static_cast<Eigen::Index>(m));
      for (std::size_t k = 0; k < m; ++k) {
        const double s = lam / (lam - cfg.eigenvalues[k]);
        v(static_cast<Eigen::Index>(k)) = s * neumann_trace_left(k);
        v(static_cast<Eigen::Index>(m + k)) = s * neumann_trace_right(k);
      }
      return v;
    });
    for (std::size_t k = 0; k < m; ++k) {
      p.boundary_loading(static_cast<Eigen::Index>(k), 0) = res.limit(static_cast<Eigen::Index>(k));
      p.boundary_loading(static_cast<Eigen::Index>(k), 1) = res.limit(static_cast<Eigen::Index>(m + k));
    }
    p.loading_ladder = res.diagnostics;
  }

  NonlinearityModel& nl = p.nonlinearity;
  nl = cfg.nonlinearity;
  switch (nl.kind) {
    case NonlinearityKind::Zero:
      nl.lipschitz_L1 = 0.0;
      break;
    case NonlinearityKind::Linear:
      if (nl.matrix.rows() != static_cast<Eigen::Index>(m) || nl.matrix.cols() != static_cast<Eigen::Index>(m))
        throw Error(ErrorCode::ConfigError, "linear nonlinearity matrix must be m x m");
      nl.lipschitz_L1 = spectral_norm(nl.matrix);
      break;
    case NonlinearityKind::SaturatedPolynomial: {
      if (!(nl.radius > 0)) throw Error(ErrorCode::ConfigError, "saturation radius must be positive");
      Eigen::MatrixXd G = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
      for (const auto& t : nl.terms) {
        if (t.target >= m || t.source >= m) throw Error(ErrorCode::ConfigError, "polynomial term index out of range");
        if (t.power < 0) throw Error(ErrorCode::ConfigError, "polynomial power must be >= 0");
        if (t.power == 0) {
          if (t.coefficient != 0.0) throw Error(ErrorCode::NonzeroAtOrigin, "constant polynomial term gives F(0) != 0");
          continue;
        }
        G(static_cast<Eigen::Index>(t.target), static_cast<Eigen::Index>(t.source)) +=
            std::abs(t.coefficient) * t.power * ipow(nl.radius, t.power - 1);
      }
      nl.lipschitz_L1 = spectral_norm(G);
      break;
    }
    case NonlinearityKind::BoundaryExample: {
      if (p.basis != "neumann_cosine")
        throw Error(ErrorCode::ConfigError, "boundary_example requires the neumann_cosine basis");
      if (!(nl.radius > 0)) throw Error(ErrorCode::ConfigError, "saturation radius must be positive");
      Eigen::MatrixXd J = nl.g0 * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
      J.col(0) += nl.g1 * p.boundary_loading.col(0) + nl.g2 * p.boundary_loading.col(1);
      nl.lipschitz_L1 = spectral_norm(J);
      break;
    }
    case NonlinearityKind::Custom: {
      if (!nl.custom) throw Error(ErrorCode::ConfigError, "custom nonlinearity without a callable");
      Eigen::VectorXd f0 = nl.custom(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m)));
      if (f0.size() != static_cast<Eigen::Index>(m)) throw Error(ErrorCode::ConfigError, "custom field has wrong size");
      if (f0.norm() != 0.0) throw Error(ErrorCode::NonzeroAtOrigin, "custom F(0) != 0");
      nl.lipschitz_L1 = estimate_lipschitz(nl.custom, m, 1.0, 4000, 0x5eed);
      break;
    }
  }

  NoiseModel& nz = p.noise;
  nz = cfg.noise;
  const auto mm = static_cast<Eigen::Index>(m);
  if (nz.weights.size() == 0) nz.weights = Eigen::VectorXd::Zero(mm);
  if (nz.slopes.size() == 0) nz.slopes = Eigen::VectorXd::Zero(mm);
  if (nz.weights.size() != mm || nz.slopes.size() != mm)
    throw Error(ErrorCode::ConfigError, "noise slopes and weights need one entry per mode");
  for (Eigen::Index k = 0; k < mm; ++k) {
    if (!(nz.weights(k) >= 0.0)) throw Error(ErrorCode::ConfigError, "noise weights must be >= 0");
    if (!std::isfinite(nz.slopes(k))) throw Error(ErrorCode::ConfigError, "noise slopes must be finite");
  }
  if (nz.kind == NoiseKind::Saturated && !(nz.radius > 0))
    throw Error(ErrorCode::ConfigError, "saturation radius must be positive");
  if (nz.kind == NoiseKind::Zero) {
    nz.slopes.setZero();
    nz.lipschitz_L2 = 0.0;
  } else {
    nz.lipschitz_L2 = (nz.slopes.cwiseAbs().array() * nz.weights.cwiseSqrt().array()).maxCoeff();
  }

  // Both fields must vanish at the origin.
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(mm), out(mm);
  p.drift(zero.data(), out.data());
  if (out.norm() != 0.0) throw Error(ErrorCode::NonzeroAtOrigin, "F(0) != 0");
  p.diffusion_coefficients(zero.data(), out.data());
  if (out.norm() != 0.0) throw Error(ErrorCode::NonzeroAtOrigin, "sigma(0) != 0");
  return p;
}

Eigen::VectorXd semigroup_apply(const SpectralProblem& p, double t, const Eigen::VectorXd& v, Block block) {
  if (v.size() != p.eigenvalues.size()) throw Error(ErrorCode::ConfigError, "vector size does not match problem");
  if (t < 0 && block != Block::Unstable && !p.stable_modes.empty())
    throw Error(ErrorCode::StableBackwardTime, "stable semigroup is only defined for t >= 0");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(v.size());
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    const bool u = p.is_unstable(static_cast<std::size_t>(k));
    const bool in = block == Block::Full || (block == Block::Unstable) == u;
    if (in) out(k) = std::exp(p.eigenvalues(k) * t) * v(k);
  }
  return out;
}

Eigen::VectorXd project(const SpectralProblem& p, const Eigen::VectorXd& v, Side side) {
  if (v.size() != p.eigenvalues.size()) throw Error(ErrorCode::ConfigError, "vector size does not match problem");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(v.size());
  for (Eigen::Index k = 0; k < v.size(); ++k)
    if (p.is_unstable(static_cast<std::size_t>(k)) == (side == Side::Unstable)) out(k) = v(k);
  return out;
}

GapInputs gap_inputs(const SpectralProblem& p) { return {p.bound_K, p.L1(), p.L2(), p.alpha, p.gamma}; }

namespace {

void check_gap_inputs(const GapInputs& in, double C) {
  if (!(in.alpha > in.gamma)) throw Error(ErrorCode::DegenerateGap, "alpha must exceed gamma");
  if (!(C >= 0.0) || !std::isfinite(C)) throw Error(ErrorCode::ConfigError, "C_zeta must be finite and >= 0");
}

GapSide unstable_side(const GapInputs& in, double C) {
  GapSide s;
  const double a = in.L1 / (in.alpha - in.gamma);
  const double b = in.L1 * C;
  const double c = in.L2 * C;
  s.value = in.K * (a + b + c);
  s.pass = s.value < 1.0;
  s.terms = {{"L1/(alpha-gamma)", in.K * a}, {"L1*C_zeta", in.K * b}, {"L2*C_zeta", in.K * c}};
  return s;
}

GapSide stable_side(const GapInputs& in, double C) {
  GapSide s;
  const double a = in.L1 / (in.alpha - in.gamma);
  const double d = in.L2 / std::sqrt(2.0 * in.alpha - 2.0 * in.gamma);
  const double b = in.L1 * C;
  const double c = in.L2 * C;
  s.value = in.K * (a + d + b + c);
  s.pass = s.value < 1.0;
  s.terms = {{"L1/(alpha-gamma)", in.K * a},
             {"L2/sqrt(2alpha-2gamma)", in.K * d},
             {"L1*C_zeta", in.K * b},
             {"L2*C_zeta", in.K * c}};
  return s;
}

}  // namespace

GapReport gap_unstable(const GapInputs& in, double C_zeta) {
  check_gap_inputs(in, C_zeta);
  GapReport r;
  r.C_zeta = C_zeta;
  r.unstable = unstable_side(in, C_zeta);
  return r;
}

GapReport gap_stable(const GapInputs& in, double C_zeta) {
  check_gap_inputs(in, C_zeta);
  GapReport r;
  r.C_zeta = C_zeta;
  r.stable = stable_side(in, C_zeta);
  return r;
}

GapReport gap_report(const GapInputs& in, double C_zeta) {
  check_gap_inputs(in, C_zeta);
  GapReport r;
  r.C_zeta = C_zeta;
  r.unstable = unstable_side(in, C_zeta);
  r.stable = stable_side(in, C_zeta);
  return r;
}

GapReport gap_unstable(const SpectralProblem& p, double C_zeta) { return gap_unstable(gap_inputs(p), C_zeta); }
GapReport gap_stable(const SpectralProblem& p, double C_zeta) { return gap_stable(gap_inputs(p), C_zeta); }
GapReport gap_report(const SpectralProblem& p, double C_zeta) { return gap_report(gap_inputs(p), C_zeta); }

}  // namespace lpm
