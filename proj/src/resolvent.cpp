#include "lpm/resolvent.hpp"

#include "lpm/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lpm {

HilleYosidaData hille_yosida(const SpectralProblem& p, Block block) {
  HilleYosidaData hy;
  hy.vartheta = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t k = 0; k < p.dim(); ++k) {
    const bool in = block == Block::Full || (block == Block::Unstable) == p.is_unstable(k);
    if (!in) continue;
    hy.vartheta = std::max(hy.vartheta, p.eigenvalues(static_cast<Eigen::Index>(k)));
    any = true;
  }
  if (!any) throw Error(ErrorCode::ConfigError, std::string("empty block: ") + to_string(block));
  return hy;
}

std::vector<double> resolvent_boundary(double lambda, const BoundaryTriple& d) {
  if (!(lambda > 0)) throw Error(ErrorCode::NonpositiveLambda, "resolvent needs lambda > 0");
  const std::size_t n = d.f.size();
  if (n < 2) throw Error(ErrorCode::ConfigError, "grid function needs at least two nodes");
  for (double v : d.f)
    if (!std::isfinite(v)) throw Error(ErrorCode::ConfigError, "grid function must be finite");
  const double mu = std::sqrt(lambda);
  const double h = 1.0 / static_cast<double>(n - 1);
  const double denom = 1.0 - std::exp(-2.0 * mu);
  // cosh(mu(1-x)) / (mu sinh mu) and cosh(mu x) / (mu sinh mu), overflow-free.
  auto left_kernel = [&](double x) { return (std::exp(-mu * x) + std::exp(-mu * (2.0 - x))) / (mu * denom); };
  auto right_kernel = [&](double x) { return (std::exp(-mu * (1.0 - x)) + std::exp(-mu * (1.0 + x))) / (mu * denom); };
  auto green = [&](double x, double y) {
    const double lo = std::min(x, y), hi = std::max(x, y);
    return std::exp(-mu * (hi - lo)) * (1.0 + std::exp(-2.0 * mu * lo)) * (1.0 + std::exp(-2.0 * mu * (1.0 - hi))) /
           (2.0 * mu * denom);
  };
  std::vector<double> phi(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) * h;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double w = (j == 0 || j == n - 1) ? 0.5 : 1.0;
      s += w * green(x, static_cast<double>(j) * h) * d.f[j];
    }
    phi[i] = d.a * left_kernel(x) + d.b * right_kernel(x) + h * s;
  }
  return phi;
}

double XElement::norm() const { return std::sqrt(modes.squaredNorm() + left * left + right * right); }

namespace {

void check_lambda(const SpectralProblem& p, double lambda) {
  for (Eigen::Index k = 0; k < p.eigenvalues.size(); ++k)
    if (std::abs(lambda - p.eigenvalues(k)) <= 1e-12 * std::max(1.0, std::abs(lambda)))
      throw Error(ErrorCode::LambdaInSpectrum, "lambda coincides with an eigenvalue");
  if (!(lambda > p.eigenvalues.maxCoeff()))
    throw Error(ErrorCode::LambdaInSpectrum, "lambda must exceed the growth bound of A");
}

void check_element(const SpectralProblem& p, const XElement& g) {
  if (g.modes.size() != p.eigenvalues.size()) throw Error(ErrorCode::ConfigError, "element size does not match problem");
  if ((g.left != 0.0 || g.right != 0.0) && p.basis != "neumann_cosine")
    throw Error(ErrorCode::ConfigError, "boundary data need the neumann_cosine basis");
}

}  // namespace

Eigen::VectorXd lambda_regularize(const SpectralProblem& p, double lambda, const XElement& g) {
  check_element(p, g);
  check_lambda(p, lambda);
  Eigen::VectorXd out(g.modes.size());
  for (Eigen::Index k = 0; k < out.size(); ++k) {
    const auto kk = static_cast<std::size_t>(k);
    double load = g.modes(k);
    if (g.left != 0.0) load += g.left * neumann_trace_left(kk);
    if (g.right != 0.0) load += g.right * neumann_trace_right(kk);
    out(k) = lambda / (lambda - p.eigenvalues(k)) * load;
  }
  return out;
}

ProjectionResult extend_projection(const SpectralProblem& p, const XElement& g, Side side) {
  return extend_projection(p, g, side, p.ladder);
}

ProjectionResult extend_projection(const SpectralProblem& p, const XElement& g, Side side,
                                   const std::vector<double>& ladder) {
  check_element(p, g);
  auto res = richardson_extrapolate(ladder, [&](double lam) { return project(p, lambda_regularize(p, lam, g), side); });
  if (!res.diagnostics.converged)
    throw Error(ErrorCode::LadderNotConverged,
                "extrapolants differ by " + std::to_string(res.diagnostics.cauchy_gap) + " (relative)");
  return {res.limit, res.diagnostics};
}

Eigen::VectorXd regularized_forcing(const SpectralProblem& p, const XElement& g) {
  check_element(p, g);
  Eigen::VectorXd out = g.modes;
  if (g.left != 0.0 || g.right != 0.0) {
    if (!p.loading_ladder || !p.loading_ladder->converged)
      throw Error(ErrorCode::LadderNotConverged, "boundary loading ladder did not converge");
    out += g.left * p.boundary_loading.col(0) + g.right * p.boundary_loading.col(1);
  }
  return out;
}

DiamondKernel::DiamondKernel(const SpectralProblem& p, double dt_) : decay(p.eigenvalues.size()), dt(dt_) {
  for (Eigen::Index k = 0; k < decay.size(); ++k) decay(k) = std::exp(p.eigenvalues(k) * dt);
}

void DiamondKernel::step(double* S, const double* f_j, const double* f_next) const {
  const double half = 0.5 * dt;
  for (Eigen::Index k = 0; k < decay.size(); ++k) S[k] = decay(k) * (S[k] + half * f_j[k]) + half * f_next[k];
}

std::vector<Eigen::VectorXd> convolve_diamond(const SpectralProblem& p, const std::vector<XElement>& f, double dt,
                                              Block block) {
  if (!(dt > 0)) throw Error(ErrorCode::ConfigError, "dt must be positive");
  std::vector<Eigen::VectorXd> out;
  if (f.empty()) return out;
  DiamondKernel ker(p, dt);
  auto restrict_block = [&](Eigen::VectorXd v) {
    if (block == Block::Full) return v;
    return project(p, v, block == Block::Unstable ? Side::Unstable : Side::Stable);
  };
  Eigen::VectorXd S = Eigen::VectorXd::Zero(p.eigenvalues.size());
  Eigen::VectorXd prev = restrict_block(regularized_forcing(p, f[0]));
  out.push_back(S);
  for (std::size_t j = 1; j < f.size(); ++j) {
    Eigen::VectorXd next = restrict_block(regularized_forcing(p, f[j]));
    ker.step(S.data(), prev.data(), next.data());
    out.push_back(S);
    prev = std::move(next);
  }
  return out;
}

Eigen::VectorXd integrated_semigroup(const SpectralProblem& p, double t, const Eigen::VectorXd& v) {
  if (t < 0 && !p.stable_modes.empty()) throw Error(ErrorCode::StableBackwardTime, "integrated semigroup needs t >= 0");
  Eigen::VectorXd out(v.size());
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    const double l = p.eigenvalues(k);
    out(k) = (l == 0.0 ? t : std::expm1(l * t) / l) * v(k);
  }
  return out;
}

double c_kappa(double epsilon, double rho, double vartheta, double kappa) {
  if (!(kappa > vartheta)) throw Error(ErrorCode::KappaBelowVartheta, "kappa must exceed vartheta");
  if (!(epsilon > 0) || !(rho > 0)) throw Error(ErrorCode::ConfigError, "epsilon and rho must be positive");
  return 2.0 * epsilon * std::max(1.0, std::exp(-kappa * rho)) / -std::expm1((vartheta - kappa) * rho);
}

std::optional<double> DeltaTable::rho_for(double eps) const {
  std::optional<double> best;
  for (std::size_t i = 0; i < times.size(); ++i)
    if (times[i] > 0 && M * values[i] <= eps) best = times[i];
  return best;
}

std::vector<XElement> default_probes(const SpectralProblem& p, Block block) {
  std::vector<XElement> probes;
  const auto m = static_cast<Eigen::Index>(p.dim());
  for (std::size_t k = 0; k < p.dim(); ++k) {
    const bool in = block == Block::Full || (block == Block::Unstable) == p.is_unstable(k);
    if (!in) continue;
    XElement e{Eigen::VectorXd::Zero(m)};
    e.modes(static_cast<Eigen::Index>(k)) = 1.0;
    probes.push_back(e);
  }
  if (p.nonlinearity.kind == NonlinearityKind::BoundaryExample) {
    probes.push_back(XElement{Eigen::VectorXd::Zero(m), 1.0, 0.0});
    probes.push_back(XElement{Eigen::VectorXd::Zero(m), 0.0, 1.0});
  }
  return probes;
}

namespace {

std::vector<double> delta_values(const SpectralProblem& p, double dt, std::size_t n_steps,
                                 const std::vector<XElement>& probes, Block block) {
  std::vector<double> vals(n_steps + 1, 0.0);
  for (const XElement& f : probes) {
    const double fn = f.norm();
    if (fn == 0.0) continue;
    std::vector<XElement> path(n_steps + 1, f);
    auto S = convolve_diamond(p, path, dt, block);
    for (std::size_t i = 0; i <= n_steps; ++i) vals[i] = std::max(vals[i], S[i].norm() / fn);
  }
  return vals;
}

}  // namespace

DeltaTable estimate_delta(const SpectralProblem& p, double dt, std::size_t n_steps,
                          const std::vector<XElement>& probes, Block block, double M) {
  if (probes.empty()) throw Error(ErrorCode::ConfigError, "probe set must be nonempty");
  if (!(M >= 1.0)) throw Error(ErrorCode::ConfigError, "M must be >= 1");
  DeltaTable t;
  t.M = M;
  t.values = delta_values(p, dt, n_steps, probes, block);
  if (std::all_of(t.values.begin(), t.values.end(), [](double v) { return v == 0.0; })) {
    t.values = delta_values(p, dt, n_steps, default_probes(p, block), block);
    t.fallback_probes = true;
  }
  for (std::size_t i = 0; i <= n_steps; ++i) {
    t.times.push_back(static_cast<double>(i) * dt);
    if (i > 0) t.values[i] = std::max(t.values[i], t.values[i - 1]);
  }
  return t;
}

CZetaChoice c_zeta_from_delta(const SpectralProblem& p, double zeta, double dt, double horizon) {
  CZetaChoice c;
  if (p.stable_modes.empty()) {
    c.source = "no stable modes";
    return c;
  }
  c.hy = hille_yosida(p, Block::Stable);
  if (!(zeta > c.hy.vartheta)) throw Error(ErrorCode::KappaBelowVartheta, "zeta must exceed the stable growth bound");
  const auto n = static_cast<std::size_t>(std::ceil(std::max(horizon, 2 * dt) / dt));
  c.table = estimate_delta(p, dt, n, default_probes(p, Block::Stable), Block::Stable, c.hy.M);
  c.C = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < c.table.times.size(); ++i) {
    const double eps = c.table.M * c.table.values[i];
    if (!(eps > 0)) continue;
    const double C = c_kappa(eps, c.table.times[i], c.hy.vartheta, zeta);
    if (C < c.C) {
      c.C = C;
      c.epsilon = eps;
      c.rho = c.table.times[i];
    }
  }
  if (!std::isfinite(c.C)) throw Error(ErrorCode::ConfigError, "delta table is degenerate");
  c.table.epsilon = c.epsilon;
  c.table.rho = c.rho;
  c.source = "c_kappa";
  return c;
}

}  // namespace lpm
