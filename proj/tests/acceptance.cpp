// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "lpm/condexp.hpp"
#include "lpm/lyapunov_perron.hpp"
#include "lpm/parallel.hpp"
#include "lpm/resolvent.hpp"
#include "lpm/stochastic.hpp"
#include "lpm/validate/oracles.hpp"
#include "lpm/validate/studies.hpp"

#include "json.hpp"
#include "support.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

using namespace lpm;
using namespace lpm::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Ito checks from every stochastic solve in this run.
std::vector<ItoCheckSummary> g_ito;

void note_ito(const ItoCheckSummary& s) { g_ito.push_back(s); }

// 1. Gap arithmetic.
Outcome gap_arithmetic() {
  Timer t;
  GapInputs in;
  in.K = 1.0;
  in.L1 = 0.01;
  in.L2 = 0.01;
  in.alpha = 1.5;
  in.gamma = 0.5;
  const GapReport g = gap_report(in, 0.5);
  const double eta_ref = 0.01 / 1.0 + 0.01 * 0.5 + 0.01 * 0.5;
  const double delta_ref = eta_ref + 0.01 / std::sqrt(2.0);
  const double secs = t.seconds();
  const bool ok = std::abs(g.eta() - 0.02) <= 1e-12 && std::abs(g.eta() - eta_ref) <= 1e-12 &&
                  std::abs(g.delta() - delta_ref) <= 1e-12 && std::abs(g.delta() - 0.02707) < 5e-6 && secs < 1.0;
  return {ok, "eta=" + num(g.eta()) + " delta=" + num(g.delta()) + " (ref " + num(delta_ref) + ") in " + num(secs) +
                  " s"};
}

// 2. Zero nonlinearity and noise give the zero graph in one iteration.
Outcome trivial_manifold() {
  const SpectralProblem p = unit_pair(Eigen::MatrixXd::Zero(2, 2));
  LPConfig cfg;
  cfg.n_samples = 8;
  cfg.dt = 1e-3;
  cfg.tol = 1e-10;
  double hmax = 0.0;
  std::size_t iters = 0;
  for (double a : {0.5, 1.0, -2.0}) {
    const ManifoldGraph gu = unstable_graph(p, Anchor::deterministic(vec({a, 0.0})), cfg);
    const ManifoldGraph gs = stable_graph(p, Anchor::deterministic(vec({0.0, a})), cfg);
    hmax = std::max({hmax, gu.h.cwiseAbs().maxCoeff(), gs.h.cwiseAbs().maxCoeff()});
    iters = std::max({iters, gu.solution.trace.iterations, gs.solution.trace.iterations});
  }
  return {hmax <= 1e-15 && iters == 1, "max|h|=" + num(hmax) + ", iterations=" + std::to_string(iters)};
}

// 3. Slope of the unstable graph against the Sylvester oracle.
Outcome linear_oracle() {
  Timer t;
  const Eigen::MatrixXd B = mat2(0.0, 0.0, 0.1, 0.0);
  const SlopeOracle o = linear_manifold_oracle(Eigen::MatrixXd::Constant(1, 1, 1.0),
                                               Eigen::MatrixXd::Constant(1, 1, -1.0), B);
  const SpectralProblem p = unit_pair(B);
  LPConfig cfg;
  cfg.n_samples = 1;
  cfg.dt = 1e-3;
  cfg.tol = 1e-8;
  double worst = 0.0;
  double slope = 0.0;
  for (double a : {1.0, 0.5}) {
    const ManifoldGraph g = unstable_graph(p, Anchor::deterministic(vec({a, 0.0})), cfg);
    slope = g.h(0, 1) / a;
    worst = std::max(worst, std::abs(slope - o.M(0, 0)));
  }
  const double secs = t.seconds();
  return {worst <= 1e-3 && std::abs(o.M(0, 0) - 0.05) < 1e-12 && secs < 10.0,
          "slope=" + num(slope) + " oracle=" + num(o.M(0, 0)) + " |diff|=" + num(worst) + " in " + num(secs) + " s"};
}

// 4. Per-iteration contraction ratios against eta.
Outcome contraction() {
  const Eigen::MatrixXd B = mat2(0.0, 0.1, 0.1, 0.0);
  std::ostringstream detail;
  bool ok = true;
  struct Case {
    const char* name;
    double noise;
    std::size_t n;
    double dt;
  };
  for (const Case& c : {Case{"deterministic", 0.0, 1, 1e-3}, Case{"stochastic", 0.05, 400, 1e-2}}) {
    const SpectralProblem p = unit_pair(B, c.noise);
    LPConfig cfg;
    cfg.n_samples = c.n;
    cfg.dt = c.dt;
    cfg.tol = 1e-10;
    cfg.seed = 11;
    const LPSolution s = lp_backward_solve(p, Anchor::deterministic(vec({1.0, 0.0})), cfg);
    if (c.noise != 0.0) note_ito(s.ito);
    double rmax = 0.0;
    for (double r : s.trace.ratios) rmax = std::max(rmax, r);
    const bool case_ok = s.trace.ratios.size() >= 5 && rmax <= 1.2 * s.gap.eta() && s.trace.converged;
    ok = ok && case_ok;
    detail << c.name << ": " << s.trace.ratios.size() << " ratios, max " << num(rmax) << " vs 1.2*eta "
           << num(1.2 * s.gap.eta()) << "; ";
  }
  return {ok, detail.str()};
}

// 5. Invariance residual on coupled noise, with joint (dt, n) refinement.
Outcome invariance() {
  Timer t;
  const SpectralProblem p = wide_pair(mat2(0.0, 0.0, 0.1, 0.0), 0.1);
  const std::vector<std::pair<double, std::size_t>> runs{{4e-3, 625}, {2e-3, 2500}, {1e-3, 10000}};
  std::vector<double> res;
  std::ostringstream detail;
  for (const auto& [dt, n] : runs) {
    LPConfig cfg;
    cfg.dt = dt;
    cfg.n_samples = n;
    cfg.tol = 1e-3;
    cfg.seed = 5;
    const InvarianceResult r = invariance_residual(p, Anchor::deterministic(vec({1.0, 0.0})), cfg, 0.2, Side::Unstable);
    note_ito(r.ito);
    res.push_back(r.residual);
    detail << "(dt=" << dt << ", n=" << n << ") -> " << num(r.residual) << "; ";
  }
  const double secs = t.seconds();
  const bool mono = res[1] < res[0] && res[2] < res[1];
  detail << "monotone=" << (mono ? "yes" : "no") << ", " << num(secs) << " s";
  return {res.back() <= 5e-2 && mono && secs < 300.0, detail.str()};
}

// 6. Lipschitz certificates on both sides.
Outcome lipschitz() {
  const SpectralProblem p = wide_pair(mat2(0.0, 0.1, 0.1, 0.0), 0.1);
  LPConfig cfg;
  cfg.n_samples = 1000;
  cfg.dt = 1e-2;
  cfg.tol = 1e-4;
  cfg.seed = 3;
  std::vector<Eigen::VectorXd> ua, sa;
  for (double a : {-2.0, -1.0, -0.5, -0.1, 0.2, 0.7, 1.5, 2.5}) {
    ua.push_back(vec({a, 0.0}));
    sa.push_back(vec({0.0, a}));
  }
  const LipschitzCertificate cu = lipschitz_certify_anchors(p, cfg, Side::Unstable, ua);
  const LipschitzCertificate cs = lipschitz_certify_anchors(p, cfg, Side::Stable, sa);
  const bool ok = cu.pass && cs.pass && cu.ratios.size() >= 20 && cs.ratios.size() >= 20 &&
                  cu.empirical <= 1.25 * cu.theoretical && cs.empirical <= 1.25 * cs.theoretical;
  return {ok, "unstable " + num(cu.empirical) + " <= " + num(cu.theoretical) + "x1.25 over " +
                  std::to_string(cu.ratios.size()) + " pairs; stable " + num(cs.empirical) + " <= " +
                  num(cs.theoretical) + "x1.25 over " + std::to_string(cs.ratios.size()) + " pairs"};
}

// 7. Regularization error decays like 1/lambda.
Outcome regularization_order() {
  const SpectralProblem p = neumann(8);
  StudyOptions o;
  o.g.modes = Eigen::VectorXd::Zero(8);
  o.g.modes(0) = 1.0;
  o.g.modes(1) = 0.5;
  o.g.modes(2) = -0.25;
  const StudyTable t = refinement_study(p, StudyParameter::Lambda, {1e2, 1e3, 1e4}, o);
  double worst = 0.0;
  for (const auto& r : t.rows)
    worst = std::max(worst, std::abs(r.error - regularization_error_oracle(p, r.value, o.g.modes)) / r.error);
  return {std::abs(t.slope + 1.0) <= 0.2 && worst < 1e-10,
          "slope=" + num(t.slope) + ", max rel. deviation from modal oracle " + num(worst)};
}

// 8. Example spectrum emitted by the CLI.
Outcome example_spectrum() {
  const fs::path dir = fs::temp_directory_path() / "lpm_acceptance_example";
  fs::remove_all(dir);
  const std::string cmd = std::string(LPM_CLI_PATH) + " example-pde --modes 4 --out " + dir.string() + " >/dev/null";
  const int rc = std::system(cmd.c_str());
  if (rc != 0) return {false, "example-pde exited with " + std::to_string(rc)};
  std::ifstream f(dir / "example_report.json");
  const auto j = nlohmann::json::parse(f);
  const auto ev = j.at("eigenvalues").get<std::vector<double>>();
  const double pi2 = std::numbers::pi * std::numbers::pi;
  const std::vector<double> ref{pi2 / 2, -pi2 / 2, -7 * pi2 / 2, -17 * pi2 / 2};
  bool ok = ev.size() == ref.size();
  for (std::size_t i = 0; ok && i < ref.size(); ++i) ok = ev[i] == ref[i];
  std::ostringstream d;
  for (double v : ev) d << num(v) << ' ';
  return {ok, "eigenvalues " + d.str()};
}

// 9. Gaussian conditional-moment recovery.
Outcome condexp_oracles() {
  const std::size_t n = 100000;
  const double t = 0.5, tau = 1.0;
  const WienerEnsemble W(17, TimeGrid::from_start(0.0, 0.5, 2), vec({1.0}), n);
  const Eigen::MatrixXd Wt = W.values_at(1), Wtau = W.values_at(2);
  const RegressionBasis lin = RegressionBasis::polynomial({0}, 1);
  const RegressionBasis quad = RegressionBasis::polynomial({0}, 2);

  auto check = [&](const Eigen::MatrixXd& target, const RegressionBasis& b, std::size_t pdim,
                   const std::function<double(double)>& truth, double& rms, double& band) {
    const CondexpEstimate e = condexp_lsmc(target, Wt, b);
    double se = 0.0, sr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      const double d = e.fitted(r, 0) - truth(Wt(r, 0));
      se += d * d;
      const double res = target(r, 0) - e.fitted(r, 0);
      sr += res * res;
    }
    rms = std::sqrt(se / static_cast<double>(n));
    const double sigma = std::sqrt(sr / static_cast<double>(n - pdim));
    band = 4.0 * sigma * std::sqrt(static_cast<double>(pdim) / static_cast<double>(n));
    return rms <= band;
  };
  double r1, b1, r2, b2;
  const bool ok1 = check(Wtau, lin, 2, [](double w) { return wiener_conditional_mean(w); }, r1, b1);
  const Eigen::MatrixXd sq = Wtau.array().square().matrix();
  const bool ok2 = check(sq, quad, 3, [&](double w) { return wiener_conditional_second_moment(w, t, tau); }, r2, b2);
  return {ok1 && ok2, "E[W(tau)|F_t]: rms " + num(r1) + " <= " + num(b1) + "; E[W(tau)^2|F_t]: rms " + num(r2) +
                          " <= " + num(b2)};
}

// 10. Martingale-zero checks of every stochastic solve in this run, plus direct integrals.
Outcome martingale_zero() {
  const std::size_t n = 20000;
  const TimeGrid g = TimeGrid::from_start(0.0, 0.01, 100);
  const WienerEnsemble W(23, g, vec({1.0}), n);
  Eigen::MatrixXd I1(n, 1), I2(n, 1);
  for (std::size_t s = 0; s < n; ++s) {
    double w = 0.0, a = 0.0;
    for (std::size_t j = 0; j < g.n_steps; ++j) {
      double dw;
      W.increment(s, j, &dw);
      a += w * dw;
      w += dw;
    }
    I1(static_cast<Eigen::Index>(s), 0) = w;
    I2(static_cast<Eigen::Index>(s), 0) = a;
  }
  const ItoZeroCheck c1 = condexp_ito_zero(I1, 1.0);
  const ItoZeroCheck c2 = condexp_ito_zero(I2, 1.0);
  const bool bound = std::abs(I1.mean()) <= 4.0 / std::sqrt(static_cast<double>(n)) * 1.0;
  std::size_t tests = c1.n_tests + c2.n_tests;
  double zmax = std::max(c1.max_abs_z, c2.max_abs_z);
  bool ok = c1.pass && c2.pass && bound && c1.zeros.isZero(0.0) && c2.zeros.isZero(0.0);
  for (const auto& s : g_ito) {
    ok = ok && s.pass && s.n_tests > 0;
    tests += s.n_tests;
    zmax = std::max(zmax, s.max_abs_z);
  }
  return {ok && !g_ito.empty(), std::to_string(g_ito.size()) + " solver runs, " + std::to_string(tests) +
                                    " tests, max |z| " + num(zmax) + " (limit 4)"};
}

// 11. Strong order and Monte Carlo order.
Outcome refinement_orders() {
  const SpectralProblem p = scalar_gbm(-1.0, 1.0);
  StudyOptions o;
  o.u0 = vec({1.0});
  o.horizon = 1.0;
  o.n_samples = 2000;
  o.reference_factor = 16;
  o.seed = 29;
  std::vector<double> dts;
  for (int k = 4; k <= 8; ++k) dts.push_back(std::ldexp(1.0, -k));
  const StudyTable strong = refinement_study(p, StudyParameter::Dt, dts, o);
  o.replicates = 40;
  o.dt = 1.0 / 64;
  const StudyTable mc = refinement_study(p, StudyParameter::NSamples, {250, 1000, 4000, 16000}, o);
  return {std::abs(strong.slope - 0.5) <= 0.2 && std::abs(mc.slope + 0.5) <= 0.2,
          "strong slope " + num(strong.slope) + ", MC slope " + num(mc.slope)};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

// 12. Byte-identical outputs across repeated runs and worker counts.
Outcome reproducibility() {
  const fs::path dir = fs::temp_directory_path() / "lpm_acceptance_repro";
  fs::remove_all(dir);
  fs::create_directories(dir);
  nlohmann::json cfg;
  cfg["problem"] = {{"eigenvalues", {1.0, -4.0}},
                    {"alpha", 1.0},
                    {"beta", -4.0},
                    {"gamma", 0.0},
                    {"zeta", -2.0},
                    {"nonlinearity", {{"kind", "linear"}, {"matrix", {{0.0, 0.1}, {0.1, 0.0}}}}},
                    {"noise", {{"kind", "diagonal_linear"}, {"slopes", {0.1, 0.1}}, {"weights", {1.0, 1.0}}}}};
  cfg["solver"] = {{"tol", 1e-4}, {"dt", 1e-2}, {"anchors", {{1.0, 0.0}, {-0.5, 0.0}}}};
  std::ofstream(dir / "config.json") << cfg.dump(2);
  std::vector<std::pair<std::string, int>> runs{{"a", 1}, {"b", 1}, {"c", 4}};
  for (const auto& [tag, workers] : runs) {
    const std::string cmd = "LPM_WORKERS=" + std::to_string(workers) + " " + LPM_CLI_PATH + " solve-unstable --config " +
                            (dir / "config.json").string() + " --seed 42 --samples 1500 --out " +
                            (dir / tag).string() + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc != 0) return {false, "run " + tag + " exited with " + std::to_string(rc)};
  }
  bool same = true;
  for (const char* f : {"unstable_graph.csv", "unstable_graph.json"}) {
    const std::string a = slurp(dir / "a" / f);
    same = same && !a.empty() && a == slurp(dir / "b" / f) && a == slurp(dir / "c" / f);
  }
  return {same, same ? "CSV and JSON identical for runs (1 worker) x2 and (4 workers)" : "outputs differ"};
}

}  // namespace

int main() {
  using Fn = Outcome (*)();
  const std::vector<std::pair<const char*, Fn>> criteria{
      {"gap arithmetic", gap_arithmetic},
      {"trivial manifold", trivial_manifold},
      {"linear oracle equivalence", linear_oracle},
      {"contraction certificate", contraction},
      {"invariance residual", invariance},
      {"Lipschitz certificates", lipschitz},
      {"regularization order", regularization_order},
      {"example spectrum", example_spectrum},
      {"conditional-expectation oracles", condexp_oracles},
      {"martingale-zero check", martingale_zero},
      {"refinement slopes", refinement_orders},
      {"reproducibility", reproducibility},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    Timer t;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << "criterion " << (i + 1) << " [" << criteria[i].first << "]: " << (o.pass ? "PASS" : "FAIL") << " | "
              << o.detail << " (" << num(t.seconds()) << " s)" << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria pass" : std::to_string(failures) + " criteria fail") << std::endl;
  return failures == 0 ? 0 : 1;
}
