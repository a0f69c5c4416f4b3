#include "lpm/cli.hpp"

#include "lpm/error.hpp"
#include "lpm/lyapunov_perron.hpp"
#include "lpm/problem_io.hpp"
#include "lpm/resolvent.hpp"
#include "lpm/validate/studies.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>

namespace lpm {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kVersion = "lpm 1.0.0";

struct CommonOptions {
  std::string config;
  std::optional<unsigned long long> seed;
  std::optional<std::size_t> samples;
  std::optional<double> dt;
  std::string out = ".";
  bool force = false;
};

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_json_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw Error(ErrorCode::ConfigError, "unknown key '" + it.key() + "' in " + where);
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json gap_side_json(const GapSide& s) {
  json j;
  j["value"] = s.value;
  j["pass"] = s.pass;
  json terms = json::array();
  for (const auto& [name, v] : s.terms) terms.push_back({{"term", name}, {"value", v}});
  j["terms"] = terms;
  return j;
}

json gap_json(const GapReport& g) {
  json j;
  j["C_zeta"] = g.C_zeta;
  if (g.unstable) j["unstable"] = gap_side_json(*g.unstable);
  if (g.stable) j["stable"] = gap_side_json(*g.stable);
  return j;
}

json czeta_json(double C, const std::string& source, const std::optional<CZetaChoice>& ch) {
  json j{{"value", C}, {"source", source}};
  if (ch && ch->source == "c_kappa") {
    j["epsilon"] = ch->epsilon;
    j["rho"] = ch->rho;
    j["vartheta"] = ch->hy.vartheta;
    j["M"] = ch->hy.M;
  }
  return j;
}

json truncation_json(const TruncationDiagnostics& t) {
  return {{"horizon", t.horizon}, {"automatic", t.automatic}, {"rate", t.rate},
          {"norm_bound", t.norm_bound}, {"tail_bound", t.tail_bound}, {"tol", t.tol}};
}

json trace_json(const FixedPointTrace& t) {
  return {{"differences", t.differences}, {"ratios", t.ratios}, {"iterations", t.iterations},
          {"converged", t.converged}, {"residual", t.residual}, {"regressors_frozen_at", t.frozen_at}};
}

json ito_json(const ItoCheckSummary& s) {
  return {{"times", s.times}, {"n_tests", s.n_tests}, {"max_abs_z", s.max_abs_z}, {"pass", s.pass}};
}

json regression_json(const RegressionSummary& r) {
  return {{"calls", r.calls},
          {"short_circuits", r.short_circuits},
          {"ridge_applied", r.ridge_applied},
          {"max_basis_size", r.max_basis_size},
          {"max_condition", r.max_condition},
          {"min_r_squared", r.min_r_squared}};
}

json ladder_json(const LadderDiagnostics& d) {
  return {{"lambdas", d.lambdas}, {"raw_differences", d.raw_differences}, {"cauchy_gap", d.cauchy_gap},
          {"tolerance", d.tolerance}, {"converged", d.converged}};
}

// Loaded configuration with command-line overrides applied.
struct Loaded {
  json doc;
  SpectralProblem problem;
  LPConfig lp;
};

json solver_section(const json& doc) {
  json s = doc.contains("solver") ? doc.at("solver") : json::object();
  reject_unknown(s,
                 {"tau", "T_back", "T_fwd", "tol", "max_iter", "n_samples", "dt", "seed", "C_zeta", "c_zeta_horizon",
                  "lipschitz_slack", "ito_check_points", "basis", "anchors", "t0", "refine", "invariance_anchor"},
                 "solver");
  return s;
}

LPConfig lp_from_json(const json& s, const SpectralProblem& p) {
  LPConfig c;
  c.tau = s.value("tau", c.tau);
  if (s.contains("T_back")) c.T_back = s.at("T_back").get<double>();
  if (s.contains("T_fwd")) c.T_fwd = s.at("T_fwd").get<double>();
  c.tol = s.value("tol", c.tol);
  c.max_iter = s.value("max_iter", c.max_iter);
  c.n_samples = s.value("n_samples", c.n_samples);
  c.dt = s.value("dt", c.dt);
  c.seed = s.value("seed", c.seed);
  if (s.contains("C_zeta")) c.C_zeta = s.at("C_zeta").get<double>();
  c.c_zeta_horizon = s.value("c_zeta_horizon", c.c_zeta_horizon);
  c.lipschitz_slack = s.value("lipschitz_slack", c.lipschitz_slack);
  c.ito_check_points = s.value("ito_check_points", c.ito_check_points);
  if (s.contains("basis")) {
    const json& b = s.at("basis");
    reject_unknown(b, {"family", "unstable_degree", "stable_degree"}, "solver.basis");
    const std::string fam = b.value("family", std::string("polynomial"));
    BasisFamily f;
    if (fam == "polynomial") {
      f = BasisFamily::Polynomial;
    } else if (fam == "tensor_hermite") {
      f = BasisFamily::TensorHermite;
    } else {
      throw Error(ErrorCode::ConfigError, "unknown basis family '" + fam + "'");
    }
    std::vector<BasisGroup> groups{{p.unstable_modes, b.value("unstable_degree", 2)}};
    if (!p.stable_modes.empty()) groups.push_back({p.stable_modes, b.value("stable_degree", 1)});
    c.basis = RegressionBasis(f, groups);
  }
  return c;
}

Loaded load(const CommonOptions& o, bool require_config = true) {
  Loaded L;
  if (o.config.empty()) {
    if (require_config) throw Error(ErrorCode::ConfigError, "--config is required for this subcommand");
    L.doc = json::object();
  } else {
    L.doc = read_json_file(o.config);
  }
  if (!L.doc.is_object()) throw Error(ErrorCode::ConfigError, "configuration must be a JSON object");
  json& s = L.doc["solver"];
  if (s.is_null()) s = json::object();
  if (o.seed) s["seed"] = *o.seed;
  if (o.samples) s["n_samples"] = *o.samples;
  if (o.dt) s["dt"] = *o.dt;
  if (require_config || L.doc.contains("problem")) {
    L.problem = build_problem(problem_config_from_json(L.doc));
    L.lp = lp_from_json(solver_section(L.doc), L.problem);
    L.lp.force = o.force;
  }
  return L;
}

std::vector<Eigen::VectorXd> anchors_for(const Loaded& L, Side side) {
  const json s = solver_section(L.doc);
  std::vector<Eigen::VectorXd> out;
  if (s.contains("anchors")) {
    for (const json& a : s.at("anchors")) out.push_back(from_json_vec(a));
  } else {
    const auto& block = side == Side::Unstable ? L.problem.unstable_modes : L.problem.stable_modes;
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.problem.dim()));
    if (!block.empty()) v(static_cast<Eigen::Index>(block.front())) = 1.0;
    out.push_back(v);
  }
  return out;
}

class Outputs {
 public:
  explicit Outputs(std::string dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  void write(const std::string& name, const std::string& content) {
    const fs::path path = fs::path(dir_) / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::ConfigError, "cannot write '" + path.string() + "'");
    f << content;
    paths.push_back(path.string());
  }
  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  std::vector<std::string> paths;

 private:
  std::string dir_;
};

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

int finish(Outputs& out, const std::string& sub, const json& doc, unsigned long long seed,
           std::chrono::steady_clock::time_point start, const std::string& started_at, int code) {
  RunManifest m;
  m.subcommand = sub;
  m.config_hash = fnv1a_hex(doc.dump());
  m.seed = seed;
  m.version = kVersion;
  m.started_at = started_at;
  m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  m.outputs = out.paths;
  out.write_json("manifest.json", m.to_json());
  return code;
}

// ---- subcommands ----

int cmd_check_gap(const CommonOptions& o) {
  const auto start = std::chrono::steady_clock::now();
  const std::string started = utc_now();
  Loaded L = load(o);
  std::optional<CZetaChoice> choice;
  auto [C, gu] = resolve_gap(L.problem, L.lp, Side::Unstable, &choice);
  const GapReport g = gap_report(L.problem, C);
  json rep;
  rep["subcommand"] = "check-gap";
  rep["L1"] = L.problem.L1();
  rep["L2"] = L.problem.L2();
  rep["K"] = L.problem.bound_K;
  rep["alpha"] = L.problem.alpha;
  rep["gamma"] = L.problem.gamma;
  rep["C_zeta"] = czeta_json(C, L.lp.C_zeta ? "user" : (choice ? choice->source : "none"), choice);
  rep["gap"] = gap_json(g);
  rep["pass"] = g.pass_unstable() && g.pass_stable();
  Outputs out(o.out);
  out.write_json("gap_report.json", rep);
  std::cout << "eta = " << fmt17(g.eta()) << (g.pass_unstable() ? " (pass)" : " (FAIL)") << "\n"
            << "delta = " << fmt17(g.delta()) << (g.pass_stable() ? " (pass)" : " (FAIL)") << "\n";
  return finish(out, "check-gap", L.doc, L.lp.seed, start, started, rep["pass"].get<bool>() ? kExitOk : kExitGapFail);
}

int cmd_solve(const CommonOptions& o, Side side) {
  const auto start = std::chrono::steady_clock::now();
  const std::string started = utc_now();
  Loaded L = load(o);
  const SpectralProblem& p = L.problem;
  const std::string name = side == Side::Unstable ? "solve-unstable" : "solve-stable";
  const std::string stem = side == Side::Unstable ? "unstable_graph" : "stable_graph";

  std::optional<CZetaChoice> choice;
  auto [C, gap] = resolve_gap(p, L.lp, side, &choice);
  const bool pass = side == Side::Unstable ? gap.pass_unstable() : gap.pass_stable();
  json rep;
  rep["subcommand"] = name;
  rep["C_zeta"] = czeta_json(C, L.lp.C_zeta ? "user" : (choice ? choice->source : "none"), choice);
  rep["gap"] = gap_json(gap_report(p, C));
  rep["certified"] = pass;
  Outputs out(o.out);
  if (!pass && !o.force) {
    rep["status"] = "gap_fail";
    out.write_json(stem + ".json", rep);
    std::cerr << "gap condition fails on the " << to_string(side) << " side; rerun with --force to solve anyway\n";
    return finish(out, name, L.doc, L.lp.seed, start, started, kExitGapFail);
  }
  if (!pass) std::cerr << "WARNING: gap condition fails; results are UNCERTIFIED\n";

  const auto anchors = anchors_for(L, side);
  LPConfig cfg = L.lp;
  cfg.C_zeta = C;
  (side == Side::Unstable ? cfg.T_back : cfg.T_fwd) = shared_horizon(p, cfg, side, anchors);

  json graphs = json::array();
  std::vector<Eigen::MatrixXd> hs;
  std::ostringstream csv;
  csv << "anchor,mode,x,h_mean,h_rms\r\n";
  bool all_converged = true;
  json truncation;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    json gj;
    gj["anchor"] = to_vec(anchors[a]);
    try {
      const Anchor x = Anchor::deterministic(anchors[a]);
      ManifoldGraph g = side == Side::Unstable ? unstable_graph(p, x, cfg) : stable_graph(p, x, cfg);
      const Eigen::VectorXd mean = g.h.colwise().mean().transpose();
      const Eigen::VectorXd rms = (g.h.array().square().colwise().mean().sqrt()).transpose();
      gj["h_mean"] = to_vec(mean);
      gj["h_ms_norm"] = g.h_ms_norm();
      gj["consistency_gap"] = g.consistency_gap;
      gj["membership"] = g.membership;
      gj["trace"] = trace_json(g.solution.trace);
      gj["ito_check"] = ito_json(g.solution.ito);
      gj["regression"] = regression_json(g.solution.regression);
      truncation = truncation_json(g.solution.truncation);
      for (std::size_t k = 0; k < p.dim(); ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        csv << a << ',' << k << ',' << fmt17(anchors[a](kk)) << ',' << fmt17(mean(kk)) << ',' << fmt17(rms(kk))
            << "\r\n";
      }
      if (!g.membership) all_converged = false;
      hs.push_back(std::move(g.h));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MaxIterExceeded) throw;
      gj["error"] = e.what();
      all_converged = false;
    }
    graphs.push_back(gj);
  }
  rep["truncation"] = truncation;
  rep["graphs"] = graphs;
  if (pass && all_converged && anchors.size() >= 2) {
    const LipschitzCertificate cert = lipschitz_from_values(p, cfg, side, anchors, hs);
    rep["lipschitz"] = {{"theoretical", cert.theoretical}, {"empirical", cert.empirical}, {"slack", cert.slack},
                        {"pass", cert.pass}, {"n_pairs", cert.ratios.size()}};
  }
  rep["status"] = all_converged ? "ok" : "non_convergence";
  out.write_json(stem + ".json", rep);
  out.write(stem + ".csv", csv.str());
  return finish(out, name, L.doc, cfg.seed, start, started, all_converged ? kExitOk : kExitNonConvergence);
}

int cmd_invariance(const CommonOptions& o, const std::string& side_name) {
  const auto start = std::chrono::steady_clock::now();
  const std::string started = utc_now();
  Loaded L = load(o);
  const SpectralProblem& p = L.problem;
  Side side;
  if (side_name == "unstable") {
    side = Side::Unstable;
  } else if (side_name == "stable") {
    side = Side::Stable;
  } else {
    throw Error(ErrorCode::ConfigError, "--side must be 'unstable' or 'stable'");
  }
  const json s = solver_section(L.doc);
  const double t0 = s.value("t0", 0.1);
  Eigen::VectorXd xv = s.contains("invariance_anchor") ? from_json_vec(s.at("invariance_anchor")) : anchors_for(L, side)[0];
  if (o.force) std::cerr << "WARNING: --force set; results are UNCERTIFIED if the gap fails\n";

  std::vector<std::pair<double, std::size_t>> runs;
  if (s.contains("refine")) {
    for (const json& r : s.at("refine")) runs.emplace_back(r.at(0).get<double>(), r.at(1).get<std::size_t>());
  } else {
    runs.emplace_back(L.lp.dt, L.lp.n_samples);
  }
  json rep;
  rep["subcommand"] = "invariance-test";
  rep["side"] = side_name;
  rep["t0"] = t0;
  rep["anchor"] = to_vec(xv);
  json rows = json::array();
  std::ostringstream csv;
  csv << "dt,n_samples,residual\r\n";
  for (const auto& [dt, n] : runs) {
    LPConfig cfg = L.lp;
    cfg.dt = dt;
    cfg.n_samples = n;
    const InvarianceResult r = invariance_residual(p, Anchor::deterministic(xv), cfg, t0, side);
    rows.push_back({{"dt", dt},
                    {"n_samples", n},
                    {"residual", r.residual},
                    {"h_first_ms", r.h_first_ms},
                    {"h_second_ms", r.h_second_ms},
                    {"first_trace", trace_json(r.first_trace)},
                    {"second_trace", trace_json(r.second_trace)},
                    {"truncation", truncation_json(r.truncation)},
                    {"ito_check", ito_json(r.ito)},
                    {"gap", gap_json(r.gap)}});
    csv << fmt17(dt) << ',' << n << ',' << fmt17(r.residual) << "\r\n";
  }
  rep["runs"] = rows;
  Outputs out(o.out);
  out.write_json("invariance.json", rep);
  out.write("invariance.csv", csv.str());
  return finish(out, "invariance-test", L.doc, L.lp.seed, start, started, kExitOk);
}

XElement element_from_json(const json& r, std::size_t m) {
  XElement g;
  g.modes = r.contains("g_modes") ? from_json_vec(r.at("g_modes")) : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
  if (static_cast<std::size_t>(g.modes.size()) != m) throw Error(ErrorCode::ConfigError, "g_modes has wrong length");
  g.left = r.value("g_left", 0.0);
  g.right = r.value("g_right", 0.0);
  return g;
}

int cmd_resolvent(const CommonOptions& o) {
  const auto start = std::chrono::steady_clock::now();
  const std::string started = utc_now();
  Loaded L = load(o);
  const SpectralProblem& p = L.problem;
  const json r = L.doc.contains("resolvent") ? L.doc.at("resolvent") : json::object();
  reject_unknown(r, {"lambdas", "g_modes", "g_left", "g_right", "delta_dt", "delta_horizon"}, "resolvent");
  std::vector<double> lambdas = r.contains("lambdas") ? r.at("lambdas").get<std::vector<double>>() : std::vector<double>{1e2, 1e3, 1e4};
  XElement g = element_from_json(r, p.dim());
  if (!r.contains("g_modes") && g.left == 0 && g.right == 0) {
    g.modes(0) = 1.0;
    if (p.dim() > 1) g.modes(1) = 0.5;
  }
  const LadderResult lr = richardson_extrapolate(lambdas, [&](double l) { return lambda_regularize(p, l, g); });
  const bool interior = g.left == 0 && g.right == 0;
  const Eigen::VectorXd limit = interior ? g.modes : lr.limit;
  std::ostringstream csv;
  csv << "lambda,error,extrapolant\r\n";
  std::vector<double> errs;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    const double e = (lr.values[i] - limit).norm();
    errs.push_back(e);
    csv << fmt17(lambdas[i]) << ',' << fmt17(e) << ',' << fmt17(lr.extrapolants[i].norm()) << "\r\n";
  }
  const double ddt = r.value("delta_dt", L.lp.dt);
  const double dh = r.value("delta_horizon", 1.0);
  std::ostringstream dcsv;
  dcsv << "t,delta\r\n";
  if (!p.stable_modes.empty()) {
    const DeltaTable dtab = estimate_delta(p, ddt, static_cast<std::size_t>(std::ceil(dh / ddt)),
                                           default_probes(p, Block::Stable), Block::Stable, 1.0);
    for (std::size_t i = 0; i < dtab.times.size(); ++i) dcsv << fmt17(dtab.times[i]) << ',' << fmt17(dtab.values[i]) << "\r\n";
  }
  json rep;
  rep["subcommand"] = "resolvent-study";
  rep["lambdas"] = lambdas;
  rep["errors"] = errs;
  bool positive = true;
  for (double e : errs) positive = positive && e > 0;
  if (positive && errs.size() >= 2) rep["slope"] = fit_loglog_slope(lambdas, errs);
  rep["ladder"] = ladder_json(lr.diagnostics);
  rep["limit"] = to_vec(limit);
  Outputs out(o.out);
  out.write_json("resolvent_study.json", rep);
  out.write("resolvent_study.csv", csv.str());
  out.write("delta_table.csv", dcsv.str());
  return finish(out, "resolvent-study", L.doc, L.lp.seed, start, started, kExitOk);
}

struct ExampleOptions {
  std::optional<std::size_t> modes;
  std::optional<double> g0, g1, g2;
};

int cmd_example(const CommonOptions& o, const ExampleOptions& eo) {
  const auto start = std::chrono::steady_clock::now();
  const std::string started = utc_now();
  Loaded L = load(o, false);
  const json e = L.doc.contains("example") ? L.doc.at("example") : json::object();
  reject_unknown(e, {"modes", "g0", "g1", "g2", "radius", "gamma", "zeta", "noise_slope", "ladder"}, "example");
  const std::size_t m = eo.modes ? *eo.modes : e.value("modes", std::size_t(4));
  if (m < 2) throw Error(ErrorCode::ConfigError, "the example needs at least 2 modes");
  const double pi2 = std::numbers::pi * std::numbers::pi;
  ProblemConfig c;
  for (std::size_t k = 0; k < m; ++k) c.eigenvalues.push_back((0.5 - static_cast<double>(k * k)) * pi2);
  c.alpha = 0.5 * pi2;
  c.beta = -0.5 * pi2;
  c.gamma = e.value("gamma", 0.0);
  c.zeta = e.value("zeta", -0.25 * pi2);
  c.basis = "neumann_cosine";
  if (e.contains("ladder")) c.ladder = e.at("ladder").get<std::vector<double>>();
  c.nonlinearity = NonlinearityModel::boundary_example(eo.g0 ? *eo.g0 : e.value("g0", 0.0),
                                                       eo.g1 ? *eo.g1 : e.value("g1", 0.0),
                                                       eo.g2 ? *eo.g2 : e.value("g2", 0.0), e.value("radius", 1.0));
  const double ns = e.value("noise_slope", 0.0);
  if (ns != 0.0) {
    Eigen::VectorXd q(static_cast<Eigen::Index>(m));
    for (std::size_t k = 0; k < m; ++k) q(static_cast<Eigen::Index>(k)) = 1.0 / (1.0 + static_cast<double>(k * k));
    c.noise = NoiseModel::diagonal_linear(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m), ns), q);
  }
  const SpectralProblem p = build_problem(c);
  L.problem = p;
  LPConfig lp = lp_from_json(solver_section(L.doc), p);
  std::optional<CZetaChoice> choice;
  auto [C, gu] = resolve_gap(p, lp, Side::Unstable, &choice);
  const GapReport g = gap_report(p, C);

  json rep;
  rep["subcommand"] = "example-pde";
  rep["problem"] = problem_config_to_json(c);
  rep["eigenvalues"] = to_vec(p.eigenvalues);
  rep["L1"] = p.L1();
  rep["L2"] = p.L2();
  rep["C_zeta"] = czeta_json(C, lp.C_zeta ? "user" : (choice ? choice->source : "none"), choice);
  rep["gap"] = gap_json(g);
  if (p.loading_ladder) rep["ladder"] = ladder_json(*p.loading_ladder);
  Outputs out(o.out);
  out.write_json("example_problem.json", json{{"problem", problem_config_to_json(c)}});
  out.write_json("example_report.json", rep);
  std::ostringstream csv;
  csv << "mode,eigenvalue\r\n";
  for (std::size_t k = 0; k < m; ++k) csv << k << ',' << fmt17(p.eigenvalues(static_cast<Eigen::Index>(k))) << "\r\n";
  out.write("example_spectrum.csv", csv.str());
  return finish(out, "example-pde", L.doc, lp.seed, start, started, kExitOk);
}

int cmd_refine(const CommonOptions& o) {
  const auto start = std::chrono::steady_clock::now();
  const std::string started = utc_now();
  Loaded L = load(o);
  const SpectralProblem& p = L.problem;
  if (!L.doc.contains("study")) throw Error(ErrorCode::ConfigError, "refine needs a 'study' section");
  const json s = L.doc.at("study");
  reject_unknown(s,
                 {"parameter", "values", "horizon", "n_samples", "replicates", "reference_factor", "u0", "anchor",
                  "reference_T", "g_modes", "g_left", "g_right", "dt"},
                 "study");
  const StudyParameter param = study_parameter_from_string(s.at("parameter").get<std::string>());
  const auto values = s.at("values").get<std::vector<double>>();
  StudyOptions so;
  so.seed = L.lp.seed;
  so.lp = L.lp;
  so.horizon = s.value("horizon", so.horizon);
  so.n_samples = s.value("n_samples", L.lp.n_samples);
  so.replicates = s.value("replicates", so.replicates);
  so.reference_factor = s.value("reference_factor", so.reference_factor);
  so.dt = s.value("dt", so.dt);
  so.reference_T = s.value("reference_T", 0.0);
  if (s.contains("u0")) so.u0 = from_json_vec(s.at("u0"));
  if (s.contains("anchor")) {
    so.anchor = from_json_vec(s.at("anchor"));
  } else {
    so.anchor = anchors_for(L, Side::Unstable)[0];
  }
  so.g = element_from_json(s, p.dim());
  const StudyTable t = refinement_study(p, param, values, so);
  json rep;
  rep["subcommand"] = "refine";
  rep["parameter"] = to_string(t.parameter);
  rep["observable"] = t.observable;
  rep["slope"] = t.slope;
  rep["monotone"] = t.monotone;
  json rows = json::array();
  for (const auto& r : t.rows) rows.push_back({{"value", r.value}, {"observable", r.observable}, {"error", r.error}});
  rep["rows"] = rows;
  Outputs out(o.out);
  std::ostringstream csv;
  write_study_csv(t, csv);
  out.write("refine.csv", csv.str());
  out.write_json("refine.json", rep);
  return finish(out, "refine", L.doc, L.lp.seed, start, started, kExitOk);
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::ConfigError:
    case ErrorCode::OrderingViolation:
    case ErrorCode::SpectralGapViolation:
    case ErrorCode::NonzeroAtOrigin:
    case ErrorCode::DegenerateGap:
    case ErrorCode::GridMismatch:
    case ErrorCode::KappaBelowVartheta:
    case ErrorCode::TruncationTooShort:
      return kExitConfigError;
    case ErrorCode::GapViolation:
      return kExitGapFail;
    case ErrorCode::MaxIterExceeded:
    case ErrorCode::LadderNotConverged:
      return kExitNonConvergence;
    default:
      return kExitFailure;
  }
}

}  // namespace

nlohmann::json RunManifest::to_json() const {
  return {{"subcommand", subcommand}, {"config_hash", config_hash}, {"seed", seed},        {"version", version},
          {"started_at", started_at}, {"wall_seconds", wall_seconds}, {"outputs", outputs}};
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Lyapunov-Perron invariant manifold solver for spectral SPDE models"};
  app.require_subcommand(1);
  app.fallthrough();
  CommonOptions o;
  unsigned long long seed = 0;
  std::size_t samples = 0;
  double dt = 0.0;
  auto* seed_opt = app.add_option("--seed", seed, "RNG seed");
  auto* samples_opt = app.add_option("--samples", samples, "Monte Carlo sample count");
  auto* dt_opt = app.add_option("--dt", dt, "Time step");
  app.add_option("--config", o.config, "Configuration JSON");
  app.add_option("--out", o.out, "Output directory");
  app.add_flag("--force", o.force, "Solve even when the gap condition fails (report marked uncertified)");

  auto* check = app.add_subcommand("check-gap", "Evaluate the gap conditions");
  auto* su = app.add_subcommand("solve-unstable", "Unstable manifold graph");
  auto* ss = app.add_subcommand("solve-stable", "Stable invariant set graph");
  auto* inv = app.add_subcommand("invariance-test", "Invariance residual on coupled noise");
  std::string side = "unstable";
  inv->add_option("--side", side, "unstable or stable");
  auto* res = app.add_subcommand("resolvent-study", "Regularization and delta-table study");
  auto* ex = app.add_subcommand("example-pde", "Neumann boundary example problem");
  ExampleOptions eo;
  std::size_t modes = 0;
  double g0 = 0, g1 = 0, g2 = 0;
  auto* modes_opt = ex->add_option("--modes", modes, "Mode cutoff (>= 2)");
  auto* g0_opt = ex->add_option("--g0", g0);
  auto* g1_opt = ex->add_option("--g1", g1);
  auto* g2_opt = ex->add_option("--g2", g2);
  auto* ref = app.add_subcommand("refine", "Refinement study");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfigError;
  }
  if (*seed_opt) o.seed = seed;
  if (*samples_opt) o.samples = samples;
  if (*dt_opt) o.dt = dt;
  if (*modes_opt) eo.modes = modes;
  if (*g0_opt) eo.g0 = g0;
  if (*g1_opt) eo.g1 = g1;
  if (*g2_opt) eo.g2 = g2;

  try {
    if (*check) return cmd_check_gap(o);
    if (*su) return cmd_solve(o, Side::Unstable);
    if (*ss) return cmd_solve(o, Side::Stable);
    if (*inv) return cmd_invariance(o, side);
    if (*res) return cmd_resolvent(o);
    if (*ex) return cmd_example(o, eo);
    if (*ref) return cmd_refine(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: configuration: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitConfigError;
}

}  // namespace lpm
