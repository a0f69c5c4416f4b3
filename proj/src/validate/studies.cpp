#include "lpm/validate/studies.hpp"

#include "lpm/error.hpp"
#include "lpm/stochastic.hpp"
#include "lpm/validate/oracles.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace lpm {

const char* to_string(StudyParameter s) {
  switch (s) {
    case StudyParameter::Dt: return "dt";
    case StudyParameter::NSamples: return "n_samples";
    case StudyParameter::TBack: return "T_back";
    case StudyParameter::Lambda: return "lambda";
  }
  return "?";
}

StudyParameter study_parameter_from_string(const std::string& s) {
  if (s == "dt") return StudyParameter::Dt;
  if (s == "n_samples" || s == "samples") return StudyParameter::NSamples;
  if (s == "T_back" || s == "tback") return StudyParameter::TBack;
  if (s == "lambda") return StudyParameter::Lambda;
  throw Error(ErrorCode::ConfigError, "unknown study parameter '" + s + "'");
}

double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorCode::ConfigError, "slope fit needs >= 2 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) throw Error(ErrorCode::ConfigError, "slope fit needs positive values");
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

namespace {

Eigen::VectorXd initial_state(const SpectralProblem& p, const StudyOptions& o) {
  if (o.u0.size() == 0) return Eigen::VectorXd::Ones(static_cast<Eigen::Index>(p.dim()));
  if (static_cast<std::size_t>(o.u0.size()) != p.dim()) throw Error(ErrorCode::ConfigError, "u0 has wrong dimension");
  return o.u0;
}

std::size_t as_steps(double length, double dt) {
  const double r = length / dt;
  const auto k = static_cast<std::size_t>(std::llround(r));
  if (k == 0 || std::abs(static_cast<double>(k) - r) > 1e-9 * r)
    throw Error(ErrorCode::GridMismatch, "horizon is not a multiple of the step");
  return k;
}

void dt_study(const SpectralProblem& p, const std::vector<double>& values, const StudyOptions& o, StudyTable& t) {
  if (p.noise.kind == NoiseKind::Zero) throw Error(ErrorCode::ConfigError, "dt study needs noise");
  t.observable = "strong_error";
  double dmin = values[0];
  for (double v : values) dmin = std::min(dmin, v);
  const double dref = dmin / static_cast<double>(o.reference_factor);
  const TimeGrid fine = TimeGrid::from_start(0.0, dref, as_steps(o.horizon, dref));
  const WienerEnsemble W = sample_wiener(o.seed, fine, p.noise, o.n_samples);
  const Eigen::MatrixXd u0 = initial_state(p, o).transpose();
  const ProcessEnsemble ref = integrate_mild(p, u0, fine, W);
  const Eigen::MatrixXd uref = ref.slice(ref.grid().n_steps);
  for (double dt : values) {
    const std::size_t factor = as_steps(dt, dref);
    const WienerEnsemble Wc = W.coarsened(factor);
    const ProcessEnsemble e = integrate_mild(p, u0, Wc.grid(), Wc);
    const Eigen::MatrixXd u = e.slice(e.grid().n_steps);
    const double err = ms_norm(u - uref);
    t.rows.push_back({dt, ms_norm(u), err});
  }
}

void n_study(const SpectralProblem& p, const std::vector<double>& values, const StudyOptions& o, StudyTable& t) {
  if (p.nonlinearity.kind != NonlinearityKind::Zero)
    throw Error(ErrorCode::ConfigError, "sample-size study needs a zero nonlinearity (exact mean)");
  if (p.noise.kind == NoiseKind::Zero) throw Error(ErrorCode::ConfigError, "sample-size study needs noise");
  t.observable = "mean_rmse";
  const Eigen::VectorXd u0 = initial_state(p, o);
  const TimeGrid grid = TimeGrid::from_start(0.0, o.dt, as_steps(o.horizon, o.dt));
  Eigen::VectorXd exact(u0.size());
  for (Eigen::Index k = 0; k < u0.size(); ++k) exact(k) = mean_oracle(p.eigenvalues(k), u0(k), grid.t_end());
  for (double v : values) {
    const auto n = static_cast<std::size_t>(std::llround(v));
    if (n < 2) throw Error(ErrorCode::ConfigError, "sample sizes must be >= 2");
    double sq = 0.0, obs = 0.0;
    for (std::size_t r = 0; r < o.replicates; ++r) {
      const WienerEnsemble W = sample_wiener(o.seed + 7919 * (r + 1), grid, p.noise, n);
      const ProcessEnsemble e = integrate_mild(p, u0.transpose(), grid, W);
      const Eigen::VectorXd mean = e.slice(grid.n_steps).colwise().mean().transpose();
      sq += (mean - exact).squaredNorm();
      obs += mean(0);
    }
    t.rows.push_back({v, obs / static_cast<double>(o.replicates), std::sqrt(sq / static_cast<double>(o.replicates))});
  }
}

void tback_study(const SpectralProblem& p, const std::vector<double>& values, const StudyOptions& o, StudyTable& t) {
  t.observable = "graph_value";
  if (static_cast<std::size_t>(o.anchor.size()) != p.dim()) throw Error(ErrorCode::ConfigError, "anchor has wrong dimension");
  double tmax = 0.0;
  for (double v : values) tmax = std::max(tmax, v);
  LPConfig cfg = o.lp;
  cfg.T_back = o.reference_T > 0 ? o.reference_T : 2.0 * tmax;
  const Anchor x = Anchor::deterministic(o.anchor);
  const ManifoldGraph ref = unstable_graph(p, x, cfg);
  for (double T : values) {
    LPConfig c = o.lp;
    c.T_back = T;
    c.enforce_truncation = false;  // short horizons are the subject of this study
    const ManifoldGraph g = unstable_graph(p, x, c);
    t.rows.push_back({T, g.h_ms_norm(), ms_norm(g.h - ref.h)});
  }
}

void lambda_study(const SpectralProblem& p, const std::vector<double>& values, const StudyOptions& o, StudyTable& t) {
  t.observable = "regularization_error";
  for (double lambda : values) {
    const Eigen::VectorXd r = lambda_regularize(p, lambda, o.g);
    Eigen::VectorXd g = o.g.modes;
    if (g.size() != r.size()) throw Error(ErrorCode::ConfigError, "g has wrong dimension");
    t.rows.push_back({lambda, r.norm(), (r - g).norm()});
  }
}

}  // namespace

StudyTable refinement_study(const SpectralProblem& p, StudyParameter parameter, const std::vector<double>& values,
                            const StudyOptions& opts) {
  if (values.size() < 3) throw Error(ErrorCode::ConfigError, "a refinement study needs at least 3 values");
  StudyTable t;
  t.parameter = parameter;
  switch (parameter) {
    case StudyParameter::Dt: dt_study(p, values, opts, t); break;
    case StudyParameter::NSamples: n_study(p, values, opts, t); break;
    case StudyParameter::TBack: tback_study(p, values, opts, t); break;
    case StudyParameter::Lambda: lambda_study(p, values, opts, t); break;
  }
  std::vector<double> xs, ys;
  t.monotone = true;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    xs.push_back(t.rows[i].value);
    ys.push_back(t.rows[i].error);
    if (i > 0 && !(t.rows[i].error < t.rows[i - 1].error)) t.monotone = false;
  }
  bool positive = true;
  for (double y : ys) positive = positive && y > 0;
  t.slope = positive ? fit_loglog_slope(xs, ys) : 0.0;
  return t;
}

void write_study_csv(const StudyTable& t, std::ostream& os) {
  os << to_string(t.parameter) << ',' << t.observable << ",error\r\n";
  char buf[96];
  for (const auto& r : t.rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g", r.value, r.observable, r.error);
    os << buf << "\r\n";
  }
}

}  // namespace lpm
