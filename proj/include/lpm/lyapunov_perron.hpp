#pragma once

#include "lpm/condexp.hpp"
#include "lpm/resolvent.hpp"
#include "lpm/spectral_problem.hpp"
#include "lpm/stochastic.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace lpm {

struct LPConfig {
  double tau = 0.0;
  std::optional<double> T_back;  // automatic when unset
  std::optional<double> T_fwd;
  bool enforce_truncation = true;  // TruncationTooShort for user horizons with a large tail
  double tol = 1e-6;
  std::size_t max_iter = 60;
  std::size_t n_samples = 1000;
  double dt = 1e-3;
  std::uint64_t seed = 1;
  std::optional<double> C_zeta;  // automatic (c_kappa over the delta table) when unset
  double c_zeta_horizon = 5.0;
  std::optional<RegressionBasis> basis;  // RegressionBasis::default_for when unset
  CondexpOptions regression;
  bool force = false;  // run even when the gap condition fails
  double lipschitz_slack = 0.25;
  std::size_t ito_check_points = 3;
};

// Anchor in full X0 coordinates; coordinates outside the anchored block must be
// zero. One row is a deterministic anchor, n rows a per-sample anchor.
struct Anchor {
  Eigen::MatrixXd values;

  static Anchor deterministic(const Eigen::VectorXd& x);
  static Anchor random(Eigen::MatrixXd per_sample);
  bool is_deterministic() const;
};

struct FixedPointTrace {
  std::vector<double> differences;  // weighted-norm d_n = |xi^{n+1} - xi^n|
  std::vector<double> ratios;       // d_{n+1} / d_n
  std::size_t iterations = 0;
  bool converged = false;
  double residual = 0.0;  // |J(xi) - xi| at the returned process
  std::size_t frozen_at = 0;  // iteration after which the regressors were held fixed; 0 if never
};

struct TruncationDiagnostics {
  double horizon = 0.0;
  bool automatic = true;
  double rate = 0.0;        // gamma - zeta backward, alpha - gamma forward
  double norm_bound = 0.0;  // working-norm bound B
  double tail_bound = 0.0;  // K e^{-rate T} B
  double tol = 0.0;
};

struct ItoCheckSummary {
  std::vector<double> times;
  std::size_t n_tests = 0;
  double max_abs_z = 0.0;
  bool pass = true;
};

struct RegressionSummary {
  std::size_t calls = 0;
  std::size_t short_circuits = 0;
  std::size_t ridge_applied = 0;
  std::size_t max_basis_size = 0;
  double max_condition = 1.0;
  double min_r_squared = 1.0;
};

struct LPSolution {
  ProcessEnsemble xi;
  FixedPointTrace trace;
  GapReport gap;
  double C_zeta = 0.0;
  std::string C_zeta_source;
  std::optional<CZetaChoice> C_zeta_choice;
  TruncationDiagnostics truncation;
  ItoCheckSummary ito;
  RegressionSummary regression;
  Eigen::MatrixXd mapped_at_tau;  // J(xi)(tau), n x m
  bool certified = true;  // false when run with force on a failing gap
};

struct ManifoldGraph {
  Side side = Side::Unstable;
  double tau = 0.0;
  Eigen::MatrixXd anchor;    // n x m, complementary block zero
  Eigen::MatrixXd h;         // n x m, anchored block zero
  Eigen::MatrixXd h_direct;  // recomputed from the integrals at tau
  double consistency_gap = 0.0;
  bool membership = true;  // stable side: converged with bounded norm
  LPSolution solution;

  double h_ms_norm() const;
};

struct LipschitzCertificate {
  Side side = Side::Unstable;
  double theoretical = 0.0;
  double empirical = 0.0;
  double slack = 0.25;
  bool pass = false;
  std::vector<double> ratios;
};

struct MembershipPoint {
  double scale = 0.0;
  bool member = false;
  std::size_t iterations = 0;
  double final_difference = 0.0;
};

struct InvarianceResult {
  Side side = Side::Unstable;
  double t0 = 0.0;
  double residual = 0.0;
  double h_first_ms = 0.0;
  double h_second_ms = 0.0;
  FixedPointTrace first_trace, second_trace;
  TruncationDiagnostics truncation;
  ItoCheckSummary ito;
  GapReport gap;
};

// Noise for a solve on `window`, or nullopt for zero noise.
std::optional<WienerEnsemble> noise_for(const SpectralProblem& p, const TimeGrid& window, std::size_t n_samples,
                                        std::uint64_t seed);

// Resolved C_zeta and the side's gap report.
std::pair<double, GapReport> resolve_gap(const SpectralProblem& p, const LPConfig& cfg, Side side,
                                         std::optional<CZetaChoice>* choice = nullptr);

TruncationDiagnostics backward_truncation(const SpectralProblem& p, const LPConfig& cfg, const Anchor& x, double eta);
TruncationDiagnostics forward_truncation(const SpectralProblem& p, const LPConfig& cfg, const Anchor& x, double delta);

// One application of the backward map on the grid ending at cfg.tau.
ProcessEnsemble lp_backward_map(const SpectralProblem& p, const ProcessEnsemble& xi, const Anchor& x,
                                const LPConfig& cfg, const WienerEnsemble* W);
ProcessEnsemble lp_forward_map(const SpectralProblem& p, const ProcessEnsemble& xi, const Anchor& x,
                               const LPConfig& cfg, const WienerEnsemble* W);

// Fixed point of the backward map. W may cover a larger window; null draws
// noise from cfg.seed. `initial` replaces the default first iterate.
LPSolution lp_backward_solve(const SpectralProblem& p, const Anchor& x, const LPConfig& cfg,
                             const WienerEnsemble* W = nullptr, std::optional<ProcessEnsemble> initial = std::nullopt);
// Non-convergence is reported in the trace, not thrown.
LPSolution lp_forward_solve(const SpectralProblem& p, const Anchor& x, const LPConfig& cfg,
                            const WienerEnsemble* W = nullptr, std::optional<ProcessEnsemble> initial = std::nullopt);

ManifoldGraph unstable_graph(const SpectralProblem& p, const Anchor& x, const LPConfig& cfg,
                             const WienerEnsemble* W = nullptr, std::optional<ProcessEnsemble> initial = std::nullopt);
ManifoldGraph stable_graph(const SpectralProblem& p, const Anchor& x, const LPConfig& cfg,
                           const WienerEnsemble* W = nullptr, std::optional<ProcessEnsemble> initial = std::nullopt);

double lipschitz_bound(const SpectralProblem& p, const LPConfig& cfg, Side side);
LipschitzCertificate lipschitz_certify(const SpectralProblem& p, const LPConfig& cfg, Side side,
                                       const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& pairs);
// Certificate from graph values already computed on shared noise (hs[i] belongs to anchors[i]).
LipschitzCertificate lipschitz_from_values(const SpectralProblem& p, const LPConfig& cfg, Side side,
                                           const std::vector<Eigen::VectorXd>& anchors,
                                           const std::vector<Eigen::MatrixXd>& hs);
// Common horizon for a set of deterministic anchors (the user value when set).
double shared_horizon(const SpectralProblem& p, const LPConfig& cfg, Side side,
                      const std::vector<Eigen::VectorXd>& anchors);
// All pairs of the given anchors, graphs computed once per anchor on shared noise.
LipschitzCertificate lipschitz_certify_anchors(const SpectralProblem& p, const LPConfig& cfg, Side side,
                                               const std::vector<Eigen::VectorXd>& anchors);

std::vector<MembershipPoint> membership_sweep(const SpectralProblem& p, const Eigen::VectorXd& direction,
                                              const std::vector<double>& scales, const LPConfig& cfg);

// Flow x + h(x, tau) to tau + t0 on coupled noise and compare with the graph there.
InvarianceResult invariance_residual(const SpectralProblem& p, const Anchor& x, const LPConfig& cfg, double t0,
                                     Side side);

}  // namespace lpm
