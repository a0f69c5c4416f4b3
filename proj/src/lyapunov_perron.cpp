#include "lpm/lyapunov_perron.hpp"

#include "lpm/error.hpp"
#include "lpm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace lpm {

Anchor Anchor::deterministic(const Eigen::VectorXd& x) {
  Anchor a;
  a.values = x.transpose();
  return a;
}

Anchor Anchor::random(Eigen::MatrixXd per_sample) {
  Anchor a;
  a.values = std::move(per_sample);
  return a;
}

bool Anchor::is_deterministic() const {
  for (Eigen::Index i = 1; i < values.rows(); ++i)
    if (values.row(i) != values.row(0)) return false;
  return true;
}

double ManifoldGraph::h_ms_norm() const { return ms_norm(h); }

namespace {

using RowMatrix = ProcessEnsemble::RowMatrix;

double anchor_ms_norm(const Anchor& x) {
  return ms_norm(x.values);
}

// Everything one map application needs, fixed for a solve.
struct MapSetup {
  const SpectralProblem* p = nullptr;
  Direction dir = Direction::Backward;
  TimeGrid grid;
  std::size_t n = 0, m = 0, N = 0;
  Eigen::MatrixXd x;  // 1 or n rows
  const WienerEnsemble* W = nullptr;
  RegressionBasis basis;
  CondexpOptions ropts;
  std::vector<std::size_t> U, S;
  std::vector<double> up, down;  // e^{lambda dt}, e^{-lambda dt}
  Eigen::MatrixXd afac;          // (N+1) x m anchor propagator, anchored block only
  std::size_t ito_points = 3;

  double xv(std::size_t s, std::size_t k) const {
    return x(x.rows() == 1 ? 0 : static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(k));
  }
  double tau() const { return dir == Direction::Backward ? grid.t_end() : grid.t_start(); }
};

MapSetup make_setup(const SpectralProblem& p, Direction dir, const TimeGrid& grid, std::size_t n, const Anchor& x,
                    const WienerEnsemble* W, const LPConfig& cfg) {
  MapSetup s;
  s.p = &p;
  s.dir = dir;
  s.grid = grid;
  s.n = n;
  s.m = p.dim();
  s.N = grid.n_steps;
  s.x = x.values;
  s.W = W;
  s.basis = cfg.basis ? *cfg.basis : RegressionBasis::default_for(p);
  s.ropts = cfg.regression;
  s.U = p.unstable_modes;
  s.S = p.stable_modes;
  s.ito_points = cfg.ito_check_points;
  s.up.resize(s.m);
  s.down.resize(s.m);
  for (std::size_t k = 0; k < s.m; ++k) {
    const double l = p.eigenvalues(static_cast<Eigen::Index>(k));
    s.up[k] = std::exp(l * grid.dt);
    s.down[k] = std::exp(-l * grid.dt);
  }
  s.afac = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.N + 1), static_cast<Eigen::Index>(s.m));
  const auto& block = dir == Direction::Backward ? s.U : s.S;
  for (std::size_t j = 0; j <= s.N; ++j) {
    const double lag = dir == Direction::Backward
                           ? static_cast<double>(static_cast<std::int64_t>(j) - static_cast<std::int64_t>(s.N)) * grid.dt
                           : static_cast<double>(j) * grid.dt;
    for (std::size_t k : block)
      s.afac(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) =
          std::exp(p.eigenvalues(static_cast<Eigen::Index>(k)) * lag);
  }
  return s;
}

Eigen::MatrixXd slice_matrix(const ProcessEnsemble& e, std::size_t j) { return Eigen::MatrixXd(e.slice(j)); }

Eigen::MatrixXd block_columns(const ProcessEnsemble& e, std::size_t j, const std::vector<std::size_t>& cols) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(e.n_samples()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t s = 0; s < e.n_samples(); ++s) {
    const double* v = e.state(j, s);
    for (std::size_t c = 0; c < cols.size(); ++c)
      out(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(c)) = v[cols[c]];
  }
  return out;
}

void record(RegressionSummary& r, const RegressionDiagnostics& d) {
  ++r.calls;
  if (d.short_circuit) ++r.short_circuits;
  if (d.ridge > 0) ++r.ridge_applied;
  r.max_basis_size = std::max(r.max_basis_size, d.effective_size);
  r.max_condition = std::max(r.max_condition, d.condition_number);
  if (!d.short_circuit) r.min_r_squared = std::min(r.min_r_squared, d.r_squared);
}

std::vector<std::size_t> ito_indices(std::size_t N, std::size_t k) {
  std::vector<std::size_t> idx;
  if (N == 0 || k == 0) return idx;
  for (std::size_t e = 0; e < k; ++e) {
    const std::size_t j = e * N / k;
    if (idx.empty() || idx.back() != j) idx.push_back(j);
  }
  return idx;
}

// One application of the backward or forward map: out = J(in).
// `cond` supplies the regressors; it is the input iterate until the iteration freezes it.
void apply_map(const MapSetup& c, const ProcessEnsemble& in, const ProcessEnsemble& cond, ProcessEnsemble& out,
               RegressionSummary* rs, ItoCheckSummary* ito) {
  const SpectralProblem& p = *c.p;
  const std::size_t m = c.m, N = c.N, n = c.n;
  const double dt = c.grid.dt, h2 = 0.5 * dt;
  const bool backward = c.dir == Direction::Backward;
  const std::size_t mu = c.U.size();
  const bool do_ito = ito && c.W && mu > 0 && n >= 2;
  const std::vector<std::size_t> eval = do_ito ? ito_indices(N, c.ito_points) : std::vector<std::size_t>{};
  std::vector<Eigen::MatrixXd> raw(eval.size(), Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                                                      static_cast<Eigen::Index>(mu)));

  for_each_chunk(n, [&](std::size_t, std::size_t b, std::size_t e) {
    std::vector<double> f(m), fn(m), g(m), dw(m), I(mu), J(mu), C(m);
    for (std::size_t s = b; s < e; ++s) {
      // Unstable block: backward recursion of the integral to the window end.
      if (mu > 0) {
        std::fill(I.begin(), I.end(), 0.0);
        std::fill(J.begin(), J.end(), 0.0);
        p.drift(in.state(N, s), fn.data());
        double* yN = out.state(N, s);
        for (std::size_t i = 0; i < mu; ++i) {
          const std::size_t k = c.U[i];
          yN[k] = backward ? c.afac(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(k)) * c.xv(s, k) - I[i]
                           : 0.0 - I[i];
        }
        std::size_t next_eval = eval.size();
        for (std::size_t j = N; j-- > 0;) {
          const double* xi = in.state(j, s);
          p.drift(xi, f.data());
          for (std::size_t i = 0; i < mu; ++i) {
            const std::size_t k = c.U[i];
            I[i] = c.down[k] * I[i] + h2 * (f[k] + c.down[k] * fn[k]);
          }
          if (do_ito) {
            p.diffusion_coefficients(xi, g.data());
            c.W->increment(s, j, dw.data());
            for (std::size_t i = 0; i < mu; ++i) {
              const std::size_t k = c.U[i];
              J[i] = g[k] * dw[k] + c.down[k] * J[i];
            }
            while (next_eval > 0 && eval[next_eval - 1] > j) --next_eval;
            if (next_eval > 0 && eval[next_eval - 1] == j)
              for (std::size_t i = 0; i < mu; ++i)
                raw[next_eval - 1](static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i)) = J[i];
          }
          double* y = out.state(j, s);
          for (std::size_t i = 0; i < mu; ++i) {
            const std::size_t k = c.U[i];
            y[k] = backward ? c.afac(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) * c.xv(s, k) - I[i]
                            : 0.0 - I[i];
          }
          std::swap(f, fn);
        }
      }
      // Stable block: forward convolution plus the Ito quadrature from the window start.
      if (!c.S.empty()) {
        std::fill(C.begin(), C.end(), 0.0);
        double* y0 = out.state(0, s);
        for (std::size_t k : c.S)
          y0[k] = backward ? C[k] : c.afac(0, static_cast<Eigen::Index>(k)) * c.xv(s, k) + C[k];
        p.drift(in.state(0, s), f.data());
        for (std::size_t j = 0; j < N; ++j) {
          const double* xi = in.state(j, s);
          p.drift(in.state(j + 1, s), fn.data());
          if (c.W) {
            p.diffusion_coefficients(xi, g.data());
            c.W->increment(s, j, dw.data());
          }
          double* y = out.state(j + 1, s);
          for (std::size_t k : c.S) {
            const double noise = c.W ? g[k] * dw[k] : 0.0;
            C[k] = c.up[k] * (C[k] + h2 * f[k] + noise) + h2 * fn[k];
            y[k] = backward ? C[k]
                            : c.afac(static_cast<Eigen::Index>(j + 1), static_cast<Eigen::Index>(k)) * c.xv(s, k) + C[k];
          }
          std::swap(f, fn);
        }
      }
    }
  });

  // Conditional expectation of the unstable targets given the iterate's state.
  if (mu > 0 && n > 1) {
    for (std::size_t j = 0; j < N; ++j) {
      const Eigen::MatrixXd target = block_columns(out, j, c.U);
      const CondexpEstimate est = condexp_lsmc(target, slice_matrix(cond, j), c.basis, c.ropts);
      if (rs) record(*rs, est.diagnostics);
      if (est.diagnostics.short_circuit) continue;
      for (std::size_t s = 0; s < n; ++s) {
        double* y = out.state(j, s);
        for (std::size_t i = 0; i < mu; ++i)
          y[c.U[i]] = est.fitted(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i));
      }
    }
  }

  if (ito) {
    *ito = ItoCheckSummary{};
    for (std::size_t e = 0; e < eval.size(); ++e) {
      const std::size_t j = eval[e];
      const ItoZeroCheck chk = condexp_ito_zero(raw[e], static_cast<double>(N - j) * dt, true, slice_matrix(cond, j),
                                                c.basis);
      ito->times.push_back(c.grid.time(j));
      ito->n_tests += chk.n_tests;
      ito->max_abs_z = std::max(ito->max_abs_z, chk.max_abs_z);
      ito->pass = ito->pass && chk.pass;
    }
  }
}

void check_anchor(const SpectralProblem& p, const Anchor& x, Side side, std::size_t n) {
  if (static_cast<std::size_t>(x.values.cols()) != p.dim())
    throw Error(ErrorCode::ConfigError, "anchor dimension does not match the problem");
  if (x.values.rows() != 1 && static_cast<std::size_t>(x.values.rows()) != n)
    throw Error(ErrorCode::GridMismatch, "anchor rows must be 1 or the sample count");
  const auto& other = side == Side::Unstable ? p.stable_modes : p.unstable_modes;
  for (std::size_t k : other)
    for (Eigen::Index r = 0; r < x.values.rows(); ++r)
      if (x.values(r, static_cast<Eigen::Index>(k)) != 0.0)
        throw Error(ErrorCode::ConfigError, std::string("anchor must lie in the ") +
                                                (side == Side::Unstable ? "unstable" : "stable") + " block");
}

std::size_t sample_count(const Anchor& x, const LPConfig& cfg, const WienerEnsemble* W) {
  if (W) return W->n_samples();
  if (x.values.rows() > 1) return static_cast<std::size_t>(x.values.rows());
  return cfg.n_samples;
}

void check_config(const LPConfig& cfg) {
  if (!(cfg.tol > 0)) throw Error(ErrorCode::ConfigError, "tol must be positive");
  if (!(cfg.dt > 0)) throw Error(ErrorCode::ConfigError, "dt must be positive");
  if (cfg.max_iter == 0) throw Error(ErrorCode::ConfigError, "max_iter must be >= 1");
  if (cfg.n_samples == 0) throw Error(ErrorCode::ConfigError, "n_samples must be >= 1");
  if (cfg.T_back && !(*cfg.T_back > 0)) throw Error(ErrorCode::ConfigError, "T_back must be positive");
  if (cfg.T_fwd && !(*cfg.T_fwd > 0)) throw Error(ErrorCode::ConfigError, "T_fwd must be positive");
}

TruncationDiagnostics truncation_rule(double K, double rate, double B, double tol, double dt,
                                      const std::optional<double>& user, bool enforce, const char* name) {
  TruncationDiagnostics d;
  d.rate = rate;
  d.norm_bound = B;
  d.tol = tol;
  if (user) {
    d.automatic = false;
    d.horizon = *user;
  } else {
    d.automatic = true;
    const double T = B > 0 ? std::log(10.0 * K * B / tol) / rate : 0.0;
    d.horizon = std::max(T, 10.0 * dt);
    d.horizon = std::ceil(d.horizon / dt - 1e-9) * dt;
  }
  d.tail_bound = K * std::exp(-rate * d.horizon) * B;
  if (enforce && !d.automatic && d.tail_bound > tol) {
    std::ostringstream os;
    os << name << " = " << d.horizon << " leaves a tail bound " << d.tail_bound << " above tol " << tol;
    throw Error(ErrorCode::TruncationTooShort, os.str());
  }
  return d;
}

WienerEnsemble window_noise(const WienerEnsemble& W, const TimeGrid& window) {
  if (W.grid().start_index == window.start_index && W.grid().n_steps == window.n_steps && W.grid().same_spacing(window))
    return W;
  return W.restricted(window);
}

// Shared iteration driver. Returns false when max_iter is hit. Regressors follow the iterate until the
// difference falls below d1 / 100, then stay fixed so the remaining map is affine.
bool iterate(const MapSetup& setup, double gamma, double tol, std::size_t max_iter, ProcessEnsemble& a,
             LPSolution& sol) {
  ProcessEnsemble b(setup.grid, setup.n, setup.m, a.filtration_tag());
  auto& tr = sol.trace;
  bool converged = false;
  std::optional<ProcessEnsemble> frozen;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    RegressionSummary rs;
    apply_map(setup, a, frozen ? *frozen : a, b, &rs, nullptr);
    const double d = weighted_distance(b, a, gamma);
    if (!std::isfinite(d)) {
      std::ostringstream os;
      os << "iterate diverged at iteration " << it;
      throw Error(ErrorCode::NonfiniteState, os.str());
    }
    if (!tr.differences.empty()) {
      const double prev = tr.differences.back();
      tr.ratios.push_back(prev > 0 ? d / prev : 0.0);
    }
    tr.differences.push_back(d);
    tr.iterations = it;
    if (!frozen && setup.n > 1 && d <= 1e-2 * tr.differences.front()) {
      frozen = b;
      tr.frozen_at = it;
    }
    std::swap(a, b);
    if (d <= tol) {
      converged = true;
      break;
    }
  }
  tr.converged = converged;
  if (!converged) {
    sol.xi = std::move(a);
    return false;
  }
  // Verification pass: residual, direct evaluation at tau and the Ito check.
  sol.regression = RegressionSummary{};
  apply_map(setup, a, frozen ? *frozen : a, b, &sol.regression, &sol.ito);
  tr.residual = weighted_distance(b, a, gamma);
  const std::size_t at = setup.dir == Direction::Backward ? setup.N : 0;
  sol.mapped_at_tau = slice_matrix(b, at);
  sol.xi = std::move(a);
  return true;
}

std::string trace_text(const FixedPointTrace& tr) {
  std::ostringstream os;
  os << tr.iterations << " iterations, last differences:";
  const std::size_t from = tr.differences.size() > 5 ? tr.differences.size() - 5 : 0;
  for (std::size_t i = from; i < tr.differences.size(); ++i) os << ' ' << tr.differences[i];
  return os.str();
}

}  // namespace

std::optional<WienerEnsemble> noise_for(const SpectralProblem& p, const TimeGrid& window, std::size_t n_samples,
                                        std::uint64_t seed) {
  if (p.noise.kind == NoiseKind::Zero) return std::nullopt;
  return sample_wiener(seed, window, p.noise, n_samples);
}

std::pair<double, GapReport> resolve_gap(const SpectralProblem& p, const LPConfig& cfg, Side side,
                                         std::optional<CZetaChoice>* choice) {
  double C = 0.0;
  if (cfg.C_zeta) {
    C = *cfg.C_zeta;
    if (choice) choice->reset();
  } else {
    CZetaChoice ch = c_zeta_from_delta(p, p.zeta, cfg.dt, cfg.c_zeta_horizon);
    C = ch.C;
    if (choice) *choice = std::move(ch);
  }
  return {C, side == Side::Unstable ? gap_unstable(p, C) : gap_stable(p, C)};
}

TruncationDiagnostics backward_truncation(const SpectralProblem& p, const LPConfig& cfg, const Anchor& x,
                                          double eta) {
  const double contraction = std::min(eta, 0.9);
  const double B = std::exp(-p.gamma * cfg.tau) * anchor_ms_norm(x) / (1.0 - contraction);
  return truncation_rule(p.bound_K, p.gamma - p.zeta, B, cfg.tol, cfg.dt, cfg.T_back, cfg.enforce_truncation, "T_back");
}

TruncationDiagnostics forward_truncation(const SpectralProblem& p, const LPConfig& cfg, const Anchor& x,
                                         double delta) {
  const double contraction = std::min(delta, 0.9);
  const double B = p.bound_K * std::exp(-p.gamma * cfg.tau) * anchor_ms_norm(x) / (1.0 - contraction);
  return truncation_rule(p.bound_K, p.alpha - p.gamma, B, cfg.tol, cfg.dt, cfg.T_fwd, cfg.enforce_truncation, "T_fwd");
}

ProcessEnsemble lp_backward_map(const SpectralProblem& p, const ProcessEnsemble& xi, const Anchor& x,
                                const LPConfig& cfg, const WienerEnsemble* W) {
  check_anchor(p, x, Side::Unstable, xi.n_samples());
  std::optional<WienerEnsemble> local;
  if (W) local = window_noise(*W, xi.grid());
  const MapSetup setup = make_setup(p, Direction::Backward, xi.grid(), xi.n_samples(), x, local ? &*local : nullptr,
                                    cfg);
  ProcessEnsemble out(xi.grid(), xi.n_samples(), xi.n_modes(), xi.filtration_tag());
  apply_map(setup, xi, xi, out, nullptr, nullptr);
  return out;
}

ProcessEnsemble lp_forward_map(const SpectralProblem& p, const ProcessEnsemble& xi, const Anchor& x,
                               const LPConfig& cfg, const WienerEnsemble* W) {
  check_anchor(p, x, Side::Stable, xi.n_samples());
  std::optional<WienerEnsemble> local;
  if (W) local = window_noise(*W, xi.grid());
  const MapSetup setup = make_setup(p, Direction::Forward, xi.grid(), xi.n_samples(), x, local ? &*local : nullptr,
                                    cfg);
  ProcessEnsemble out(xi.grid(), xi.n_samples(), xi.n_modes(), xi.filtration_tag());
  apply_map(setup, xi, xi, out, nullptr, nullptr);
  return out;
}

LPSolution lp_backward_solve(const SpectralProblem& p, const Anchor& x, const LPConfig& cfg, const WienerEnsemble* W,
                             std::optional<ProcessEnsemble> initial) {
  check_config(cfg);
  const std::size_t n = sample_count(x, cfg, W);
  check_anchor(p, x, Side::Unstable, n);

  LPSolution sol;
  auto [C, gap] = resolve_gap(p, cfg, Side::Unstable, &sol.C_zeta_choice);
  sol.C_zeta = C;
  sol.C_zeta_source = cfg.C_zeta ? "user" : sol.C_zeta_choice->source;
  sol.gap = gap;
  if (!gap.pass_unstable()) {
    if (!cfg.force) {
      std::ostringstream os;
      os << "unstable gap condition fails: eta = " << gap.eta();
      throw Error(ErrorCode::GapViolation, os.str());
    }
    sol.certified = false;
  }
  sol.truncation = backward_truncation(p, cfg, x, gap.eta());
  const TimeGrid window = TimeGrid::ending_at(cfg.tau, sol.truncation.horizon, cfg.dt);

  std::optional<WienerEnsemble> noise;
  if (p.noise.kind != NoiseKind::Zero) noise = W ? window_noise(*W, window) : *noise_for(p, window, n, cfg.seed);
  const WienerEnsemble* Wp = noise ? &*noise : nullptr;
  const MapSetup setup = make_setup(p, Direction::Backward, window, n, x, Wp, cfg);

  ProcessEnsemble a;
  if (initial) {
    if (initial->grid().start_index != window.start_index || initial->grid().n_steps != window.n_steps ||
        initial->n_samples() != n || initial->n_modes() != p.dim())
      throw Error(ErrorCode::GridMismatch, "initial iterate does not match the solve window");
    a = std::move(*initial);
    initial.reset();
  } else {
    a = ProcessEnsemble(window, n, p.dim(), cfg.seed);
    const std::size_t N = window.n_steps;
    if (x.is_deterministic()) {
      for (std::size_t j = 0; j <= N; ++j)
        for (std::size_t s = 0; s < n; ++s) {
          double* y = a.state(j, s);
          for (std::size_t k : p.unstable_modes) y[k] = setup.afac(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) * setup.xv(s, k);
        }
    } else {
      // Conditional expectation of the propagated anchor given the noise path so far.
      Eigen::MatrixXd Wt = Wp ? Wp->values_at(0) : Eigen::MatrixXd(static_cast<Eigen::Index>(n), 0);
      std::vector<std::size_t> cols(static_cast<std::size_t>(Wt.cols()));
      for (std::size_t i = 0; i < cols.size(); ++i) cols[i] = i;
      const RegressionBasis wb = RegressionBasis::polynomial(cols, 2);
      std::vector<double> dw(static_cast<std::size_t>(Wt.cols()));
      for (std::size_t j = 0; j <= N; ++j) {
        Eigen::MatrixXd target(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p.unstable_modes.size()));
        for (std::size_t s = 0; s < n; ++s)
          for (std::size_t i = 0; i < p.unstable_modes.size(); ++i) {
            const std::size_t k = p.unstable_modes[i];
            target(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i)) =
                setup.afac(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) * setup.xv(s, k);
          }
        const CondexpEstimate est = condexp_anchor(target, window.time(j), cfg.tau, Wt, wb, cfg.regression);
        for (std::size_t s = 0; s < n; ++s) {
          double* y = a.state(j, s);
          for (std::size_t i = 0; i < p.unstable_modes.size(); ++i)
            y[p.unstable_modes[i]] = est.fitted(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i));
        }
        if (Wp && j < N)
          for (std::size_t s = 0; s < n; ++s) {
            Wp->increment(s, j, dw.data());
            for (std::size_t q = 0; q < dw.size(); ++q) Wt(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(q)) += dw[q];
          }
      }
    }
  }

  if (!iterate(setup, p.gamma, cfg.tol, cfg.max_iter, a, sol))
    throw Error(ErrorCode::MaxIterExceeded, "backward fixed point not reached: " + trace_text(sol.trace));
  return sol;
}

LPSolution lp_forward_solve(const SpectralProblem& p, const Anchor& x, const LPConfig& cfg, const WienerEnsemble* W,
                            std::optional<ProcessEnsemble> initial) {
  check_config(cfg);
  const std::size_t n = sample_count(x, cfg, W);
  check_anchor(p, x, Side::Stable, n);

  LPSolution sol;
  auto [C, gap] = resolve_gap(p, cfg, Side::Stable, &sol.C_zeta_choice);
  sol.C_zeta = C;
  sol.C_zeta_source = cfg.C_zeta ? "user" : sol.C_zeta_choice->source;
  sol.gap = gap;
  if (!gap.pass_stable()) {
    if (!cfg.force) {
      std::ostringstream os;
      os << "stable gap condition fails: delta = " << gap.delta();
      throw Error(ErrorCode::GapViolation, os.str());
    }
    sol.certified = false;
  }
  sol.truncation = forward_truncation(p, cfg, x, gap.delta());
  const TimeGrid window = TimeGrid::starting_at(cfg.tau, sol.truncation.horizon, cfg.dt);

  std::optional<WienerEnsemble> noise;
  if (p.noise.kind != NoiseKind::Zero) noise = W ? window_noise(*W, window) : *noise_for(p, window, n, cfg.seed);
  const MapSetup setup = make_setup(p, Direction::Forward, window, n, x, noise ? &*noise : nullptr, cfg);

  ProcessEnsemble a;
  if (initial) {
    if (initial->grid().start_index != window.start_index || initial->grid().n_steps != window.n_steps ||
        initial->n_samples() != n || initial->n_modes() != p.dim())
      throw Error(ErrorCode::GridMismatch, "initial iterate does not match the solve window");
    a = std::move(*initial);
    initial.reset();
  } else {
    a = ProcessEnsemble(window, n, p.dim(), cfg.seed);
    for (std::size_t j = 0; j <= window.n_steps; ++j)
      for (std::size_t s = 0; s < n; ++s) {
        double* y = a.state(j, s);
        for (std::size_t k : p.stable_modes)
          y[k] = setup.afac(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) * setup.xv(s, k) + 0.0;
      }
  }

  try {
    iterate(setup, p.gamma, cfg.tol, cfg.max_iter, a, sol);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NonfiniteState) throw;
    sol.trace.converged = false;
  }
  return sol;
}

namespace {

Eigen::MatrixXd broadcast(const Anchor& x, std::size_t n) {
  if (static_cast<std::size_t>(x.values.rows()) == n) return x.values;
  return x.values.row(0).replicate(static_cast<Eigen::Index>(n), 1);
}

Eigen::MatrixXd block_only(const Eigen::MatrixXd& v, const std::vector<std::size_t>& keep) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(v.rows(), v.cols());
  for (std::size_t k : keep) out.col(static_cast<Eigen::Index>(k)) = v.col(static_cast<Eigen::Index>(k));
  return out;
}

void consistency(ManifoldGraph& g, double gamma, double tol) {
  g.consistency_gap = std::exp(-gamma * g.tau) * ms_norm(g.h - g.h_direct);
  if (g.consistency_gap > 2.0 * tol) {
    std::ostringstream os;
    os << "graph value and its direct evaluation differ by " << g.consistency_gap << " (limit " << 2.0 * tol << ")";
    throw Error(ErrorCode::ConsistencyFailure, os.str());
  }
}

}  // namespace

ManifoldGraph unstable_graph(const SpectralProblem& p, const Anchor& x, const LPConfig& cfg, const WienerEnsemble* W,
                             std::optional<ProcessEnsemble> initial) {
  ManifoldGraph g;
  g.side = Side::Unstable;
  g.tau = cfg.tau;
  g.solution = lp_backward_solve(p, x, cfg, W, std::move(initial));
  const std::size_t n = g.solution.xi.n_samples();
  g.anchor = broadcast(x, n);
  g.h = block_only(slice_matrix(g.solution.xi, g.solution.xi.grid().n_steps), p.stable_modes);
  g.h_direct = block_only(g.solution.mapped_at_tau, p.stable_modes);
  consistency(g, p.gamma, cfg.tol);
  return g;
}

ManifoldGraph stable_graph(const SpectralProblem& p, const Anchor& x, const LPConfig& cfg, const WienerEnsemble* W,
                           std::optional<ProcessEnsemble> initial) {
  ManifoldGraph g;
  g.side = Side::Stable;
  g.tau = cfg.tau;
  g.solution = lp_forward_solve(p, x, cfg, W, std::move(initial));
  const std::size_t n = g.solution.xi.n_samples();
  g.anchor = broadcast(x, n);
  g.h = block_only(slice_matrix(g.solution.xi, 0), p.unstable_modes);
  g.membership = g.solution.trace.converged && g.h.allFinite();
  if (g.membership) {
    g.h_direct = block_only(g.solution.mapped_at_tau, p.unstable_modes);
    consistency(g, p.gamma, cfg.tol);
  } else {
    g.h_direct = g.h;
  }
  return g;
}

double lipschitz_bound(const SpectralProblem& p, const LPConfig& cfg, Side side) {
  auto [C, gap] = resolve_gap(p, cfg, side);
  const double K = p.bound_K, L1 = p.L1(), L2 = p.L2();
  if (side == Side::Unstable) return K * C * (L1 + L2) / (1.0 - gap.eta());
  const double ag = p.alpha - p.gamma;
  return K * K * (L1 / ag + L2 / std::sqrt(2.0 * ag)) / (1.0 - gap.delta());
}

LipschitzCertificate lipschitz_certify_anchors(const SpectralProblem& p, const LPConfig& cfg, Side side,
                                               const std::vector<Eigen::VectorXd>& anchors) {
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> pairs;
  for (std::size_t i = 0; i < anchors.size(); ++i)
    for (std::size_t j = i + 1; j < anchors.size(); ++j) pairs.emplace_back(anchors[i], anchors[j]);
  return lipschitz_certify(p, cfg, side, pairs);
}

double shared_horizon(const SpectralProblem& p, const LPConfig& cfg, Side side,
                      const std::vector<Eigen::VectorXd>& anchors) {
  const auto& user = side == Side::Unstable ? cfg.T_back : cfg.T_fwd;
  if (user) return *user;
  auto [C, gap] = resolve_gap(p, cfg, side);
  (void)C;
  double horizon = 0.0;
  for (const auto& v : anchors) {
    const Anchor x = Anchor::deterministic(v);
    const auto tr = side == Side::Unstable ? backward_truncation(p, cfg, x, gap.eta())
                                           : forward_truncation(p, cfg, x, gap.delta());
    horizon = std::max(horizon, tr.horizon);
  }
  return horizon;
}

LipschitzCertificate lipschitz_from_values(const SpectralProblem& p, const LPConfig& cfg, Side side,
                                           const std::vector<Eigen::VectorXd>& anchors,
                                           const std::vector<Eigen::MatrixXd>& hs) {
  if (anchors.size() != hs.size()) throw Error(ErrorCode::ConfigError, "one graph value per anchor is required");
  LipschitzCertificate cert;
  cert.side = side;
  cert.slack = cfg.lipschitz_slack;
  auto [C, gap] = resolve_gap(p, cfg, side);
  (void)C;
  if (!(side == Side::Unstable ? gap.pass_unstable() : gap.pass_stable()))
    throw Error(ErrorCode::GapViolation, "Lipschitz certificate requires a passing gap condition");
  cert.theoretical = lipschitz_bound(p, cfg, side);
  for (std::size_t a = 0; a < anchors.size(); ++a)
    for (std::size_t b = a + 1; b < anchors.size(); ++b) {
      const double dx = (anchors[a] - anchors[b]).norm();
      const double r = dx > 0 ? ms_norm(hs[a] - hs[b]) / dx : 0.0;
      cert.ratios.push_back(r);
      cert.empirical = std::max(cert.empirical, r);
    }
  cert.pass = cert.empirical <= cert.theoretical * (1.0 + cert.slack);
  return cert;
}

LipschitzCertificate lipschitz_certify(const SpectralProblem& p, const LPConfig& cfg, Side side,
                                       const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& pairs) {
  // Graphs once per distinct anchor, on one horizon so every graph sees the same noise.
  std::vector<Eigen::VectorXd> uniq;
  auto index_of = [&](const Eigen::VectorXd& v) {
    for (std::size_t i = 0; i < uniq.size(); ++i)
      if (uniq[i] == v) return i;
    uniq.push_back(v);
    return uniq.size() - 1;
  };
  std::vector<std::pair<std::size_t, std::size_t>> idx;
  for (const auto& pr : pairs) {
    const std::size_t a = index_of(pr.first);
    const std::size_t b = index_of(pr.second);
    idx.emplace_back(a, b);
  }
  LPConfig c2 = cfg;
  auto [C, gap] = resolve_gap(p, cfg, side);
  if (!(side == Side::Unstable ? gap.pass_unstable() : gap.pass_stable()))
    throw Error(ErrorCode::GapViolation, "Lipschitz certificate requires a passing gap condition");
  (side == Side::Unstable ? c2.T_back : c2.T_fwd) = shared_horizon(p, cfg, side, uniq);
  c2.C_zeta = C;

  std::vector<Eigen::MatrixXd> hs;
  for (const auto& v : uniq) {
    const Anchor x = Anchor::deterministic(v);
    ManifoldGraph g = side == Side::Unstable ? unstable_graph(p, x, c2) : stable_graph(p, x, c2);
    if (!g.membership) throw Error(ErrorCode::MaxIterExceeded, "stable fixed point not reached for a certificate anchor");
    hs.push_back(std::move(g.h));
  }
  LipschitzCertificate cert;
  cert.side = side;
  cert.slack = cfg.lipschitz_slack;
  cert.theoretical = lipschitz_bound(p, c2, side);
  for (const auto& [a, b] : idx) {
    const double dx = (uniq[a] - uniq[b]).norm();
    const double r = dx > 0 ? ms_norm(hs[a] - hs[b]) / dx : 0.0;
    cert.ratios.push_back(r);
    cert.empirical = std::max(cert.empirical, r);
  }
  cert.pass = cert.empirical <= cert.theoretical * (1.0 + cert.slack);
  return cert;
}

std::vector<MembershipPoint> membership_sweep(const SpectralProblem& p, const Eigen::VectorXd& direction,
                                              const std::vector<double>& scales, const LPConfig& cfg) {
  std::vector<MembershipPoint> out;
  for (double s : scales) {
    MembershipPoint mp;
    mp.scale = s;
    const LPSolution sol = lp_forward_solve(p, Anchor::deterministic(s * direction), cfg);
    mp.member = sol.trace.converged;
    mp.iterations = sol.trace.iterations;
    mp.final_difference = sol.trace.differences.empty() ? 0.0 : sol.trace.differences.back();
    out.push_back(mp);
  }
  return out;
}

InvarianceResult invariance_residual(const SpectralProblem& p, const Anchor& x, const LPConfig& cfg, double t0,
                                     Side side) {
  if (!(t0 > 0)) throw Error(ErrorCode::ConfigError, "t0 must be positive");
  InvarianceResult res;
  res.side = side;
  res.t0 = t0;
  const TimeGrid flow_grid = TimeGrid::starting_at(cfg.tau, t0, cfg.dt);
  const double tau2 = flow_grid.t_end();
  LPConfig c2 = cfg;
  c2.tau = tau2;
  const std::size_t n = sample_count(x, cfg, nullptr);

  Eigen::MatrixXd u0;
  ProcessEnsemble glued;
  bool have_glued = false;
  {
    ManifoldGraph g1 = side == Side::Unstable ? unstable_graph(p, x, cfg) : stable_graph(p, x, cfg);
    if (!g1.membership) throw Error(ErrorCode::MaxIterExceeded, "stable fixed point not reached at the first anchor");
    res.first_trace = g1.solution.trace;
    res.truncation = g1.solution.truncation;
    res.gap = g1.solution.gap;
    res.ito = g1.solution.ito;
    res.h_first_ms = g1.h_ms_norm();
    u0 = g1.anchor + g1.h;

    const auto flow_noise = noise_for(p, flow_grid, n, cfg.seed);
    const WienerEnsemble zero_noise(cfg.seed, flow_grid, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.dim())), n, 1, 0);
    const ProcessEnsemble path = integrate_mild(p, u0, flow_grid, flow_noise ? *flow_noise : zero_noise);
    u0 = slice_matrix(path, path.grid().n_steps);

    if (side == Side::Unstable) {
      // Warm start on the glued path: the old fixed point up to tau, then the flow.
      if (!c2.T_back) {
        LPConfig probe = c2;
        c2.T_back = backward_truncation(p, probe, Anchor::random(block_only(u0, p.unstable_modes)), res.gap.eta()).horizon;
      }
      const TimeGrid w1 = g1.solution.xi.grid();
      const TimeGrid w2 = TimeGrid::ending_at(tau2, *c2.T_back, cfg.dt);
      if (w2.start_index >= w1.start_index) {
        glued = ProcessEnsemble(w2, n, p.dim(), cfg.seed);
        const std::size_t stride = n * p.dim();
        for (std::size_t j = 0; j <= w2.n_steps; ++j) {
          const std::int64_t abs = w2.start_index + static_cast<std::int64_t>(j);
          const double* src;
          if (abs <= w1.start_index + static_cast<std::int64_t>(w1.n_steps))
            src = g1.solution.xi.state(static_cast<std::size_t>(abs - w1.start_index), 0);
          else
            src = path.state(static_cast<std::size_t>(abs - flow_grid.start_index), 0);
          std::copy(src, src + stride, glued.state(j, 0));
        }
        have_glued = true;
      }
    }
  }

  const auto& anchored = side == Side::Unstable ? p.unstable_modes : p.stable_modes;
  const auto& other = side == Side::Unstable ? p.stable_modes : p.unstable_modes;
  const Eigen::MatrixXd x2 = block_only(u0, anchored);
  const Eigen::MatrixXd y2 = block_only(u0, other);
  const Anchor a2 = Anchor::random(x2);
  ManifoldGraph g2 = side == Side::Unstable
                         ? unstable_graph(p, a2, c2, nullptr,
                                          have_glued ? std::optional<ProcessEnsemble>(std::move(glued)) : std::nullopt)
                         : stable_graph(p, a2, c2);
  if (!g2.membership) throw Error(ErrorCode::MaxIterExceeded, "stable fixed point not reached at the flowed anchor");
  res.second_trace = g2.solution.trace;
  res.h_second_ms = g2.h_ms_norm();
  res.ito.times.insert(res.ito.times.end(), g2.solution.ito.times.begin(), g2.solution.ito.times.end());
  res.ito.n_tests += g2.solution.ito.n_tests;
  res.ito.max_abs_z = std::max(res.ito.max_abs_z, g2.solution.ito.max_abs_z);
  res.ito.pass = res.ito.pass && g2.solution.ito.pass;
  res.residual = ms_norm(y2 - g2.h);
  return res;
}

}  // namespace lpm
