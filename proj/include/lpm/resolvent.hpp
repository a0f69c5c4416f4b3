#pragma once

#include "lpm/spectral_problem.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace lpm {

struct HilleYosidaData {
  double vartheta = 0.0;
  double M = 1.0;
};

// Growth bound of the diagonal block (largest rate in the block), M = 1.
HilleYosidaData hille_yosida(const SpectralProblem& p, Block block = Block::Full);

// Data (a, b, f) for lambda phi - phi'' = f on (0,1), phi'(0) = -a, phi'(1) = b.
// f is sampled on the uniform nodes x_i = i / (N - 1).
struct BoundaryTriple {
  double a = 0.0;
  double b = 0.0;
  std::vector<double> f;
};

std::vector<double> resolvent_boundary(double lambda, const BoundaryTriple& d);

// Element of X: interior modal coefficients plus left/right boundary data.
struct XElement {
  Eigen::VectorXd modes;
  double left = 0.0;
  double right = 0.0;

  double norm() const;
};

// lambda R_lambda(A) g in X0 modes.
Eigen::VectorXd lambda_regularize(const SpectralProblem& p, double lambda, const XElement& g);

struct ProjectionResult {
  Eigen::VectorXd value;
  LadderDiagnostics ladder;
};

ProjectionResult extend_projection(const SpectralProblem& p, const XElement& g, Side side = Side::Unstable);
ProjectionResult extend_projection(const SpectralProblem& p, const XElement& g, Side side,
                                   const std::vector<double>& ladder);

// Regularized image of g in X0 (interior part plus boundary loading).
Eigen::VectorXd regularized_forcing(const SpectralProblem& p, const XElement& g);

// Trapezoidal step for S(t) = int_0^t T(t-s) f(s) ds on a uniform grid:
// S_{j+1} = e^{A dt} S_j + dt/2 (e^{A dt} f_j + f_{j+1}).
struct DiamondKernel {
  Eigen::VectorXd decay;  // e^{lambda_k dt}
  double dt = 0.0;

  DiamondKernel(const SpectralProblem& p, double dt);
  void step(double* S, const double* f_j, const double* f_next) const;
};

// Forcing sampled on the nodes t_j = j dt, j = 0..n; returns S (path) at the same nodes.
std::vector<Eigen::VectorXd> convolve_diamond(const SpectralProblem& p, const std::vector<XElement>& f, double dt,
                                              Block block = Block::Full);

// S(t) v = int_0^t T(s) v ds, mode-wise closed form.
Eigen::VectorXd integrated_semigroup(const SpectralProblem& p, double t, const Eigen::VectorXd& v);

double c_kappa(double epsilon, double rho, double vartheta, double kappa);

struct DeltaTable {
  std::vector<double> times;
  std::vector<double> values;
  double M = 1.0;
  bool fallback_probes = false;
  std::optional<double> epsilon;
  std::optional<double> rho;

  // Largest positive grid time with M delta(t) <= eps.
  std::optional<double> rho_for(double eps) const;
};

// Probes are constant-in-time forcings; delta(t_i) = max over probes of |(S<>f)(t_i)| / |f|.
DeltaTable estimate_delta(const SpectralProblem& p, double dt, std::size_t n_steps,
                          const std::vector<XElement>& probes, Block block = Block::Stable, double M = 1.0);

// Unit coordinate probes of the block, plus unit boundary data when the nonlinearity has a boundary part.
std::vector<XElement> default_probes(const SpectralProblem& p, Block block);

struct CZetaChoice {
  double C = 0.0;
  double epsilon = 0.0;
  double rho = 0.0;
  HilleYosidaData hy;
  std::string source;
  DeltaTable table;
};

// Minimizes C_kappa(M delta(rho), rho, vartheta_s, zeta) over positive grid times.
CZetaChoice c_zeta_from_delta(const SpectralProblem& p, double zeta, double dt, double horizon);

}  // namespace lpm
