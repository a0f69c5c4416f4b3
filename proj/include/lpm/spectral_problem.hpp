#pragma once

#include "lpm/ladder.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace lpm {

enum class Block { Unstable, Stable, Full };
enum class Side { Unstable, Stable };

const char* to_string(Block b);
const char* to_string(Side s);

enum class NonlinearityKind { Zero, Linear, SaturatedPolynomial, BoundaryExample, Custom };
enum class NoiseKind { Zero, DiagonalLinear, Saturated };

const char* to_string(NonlinearityKind k);
const char* to_string(NoiseKind k);

// F_target += coefficient * clamp(u_source, -R, R)^power
struct PolynomialTerm {
  std::size_t target = 0;
  std::size_t source = 0;
  int power = 1;
  double coefficient = 0.0;
};

using VectorField = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct NonlinearityModel {
  NonlinearityKind kind = NonlinearityKind::Zero;
  Eigen::MatrixXd matrix;             // Linear
  std::vector<PolynomialTerm> terms;  // SaturatedPolynomial
  double radius = 1.0;                // SaturatedPolynomial, BoundaryExample
  double g0 = 0.0, g1 = 0.0, g2 = 0.0;  // BoundaryExample
  VectorField custom;                 // Custom (library use only)
  double lipschitz_L1 = 0.0;          // filled by build_problem

  static NonlinearityModel zero();
  static NonlinearityModel linear(Eigen::MatrixXd B);
  static NonlinearityModel saturated_polynomial(std::vector<PolynomialTerm> terms, double radius);
  // Neumann example: interior g0*phi, left flux g1*sat(mean phi), right flux g2*sat(mean phi).
  static NonlinearityModel boundary_example(double g0, double g1, double g2, double radius);
  static NonlinearityModel custom_field(VectorField f);
};

// sigma(u) dW acts diagonally: mode k receives s_k * g(u_k) * dW_k with g the
// identity (DiagonalLinear) or a clamp to [-R, R] (Saturated).
struct NoiseModel {
  NoiseKind kind = NoiseKind::Zero;
  Eigen::VectorXd slopes;
  Eigen::VectorXd weights;  // q_k
  double radius = 1.0;
  double lipschitz_L2 = 0.0;  // filled by build_problem

  static NoiseModel zero();
  static NoiseModel diagonal_linear(Eigen::VectorXd slopes, Eigen::VectorXd weights);
  static NoiseModel saturated(Eigen::VectorXd slopes, Eigen::VectorXd weights, double radius);
  std::size_t n_noise_modes() const { return static_cast<std::size_t>(weights.size()); }
};

struct ProblemConfig {
  std::vector<double> eigenvalues;
  std::optional<std::vector<std::size_t>> unstable_modes;
  double alpha = 0.0, beta = 0.0, gamma = 0.0, zeta = 0.0;
  double bound_K = 1.0;
  NonlinearityModel nonlinearity = NonlinearityModel::zero();
  NoiseModel noise = NoiseModel::zero();
  // "abstract" or "neumann_cosine" (required by the boundary example).
  std::string basis = "abstract";
  std::vector<double> ladder = default_ladder();
};

class SpectralProblem {
 public:
  Eigen::VectorXd eigenvalues;
  std::vector<std::size_t> unstable_modes;
  std::vector<std::size_t> stable_modes;
  double alpha = 0.0, beta = 0.0, gamma = 0.0, zeta = 0.0;
  double bound_K = 1.0;
  NonlinearityModel nonlinearity;
  NoiseModel noise;
  std::string basis;
  std::vector<double> ladder;
  // Regularized image of unit boundary data: column 0 left, column 1 right.
  Eigen::MatrixXd boundary_loading;
  std::optional<LadderDiagnostics> loading_ladder;
  ProblemConfig config;

  std::size_t dim() const { return static_cast<std::size_t>(eigenvalues.size()); }
  bool is_unstable(std::size_t k) const { return unstable_mask_[k] != 0; }
  double L1() const { return nonlinearity.lipschitz_L1; }
  double L2() const { return noise.lipschitz_L2; }

  // Interior modes and raw boundary data of F(u).
  void evaluate_raw(const double* u, double* interior, double& left, double& right) const;
  // Regularized drift in X0 coordinates: interior part plus the boundary loading.
  void drift(const double* u, double* out) const;
  Eigen::VectorXd drift(const Eigen::VectorXd& u) const;
  // sigma(u) dW in X0 coordinates; dW has n_noise_modes entries.
  void diffusion(const double* u, const double* dW, double* out) const;
  // Diagonal diffusion coefficients sigma(u)_k (so that diffusion = coeff .* dW).
  void diffusion_coefficients(const double* u, double* out) const;

 private:
  friend SpectralProblem build_problem(const ProblemConfig& cfg);
  std::vector<char> unstable_mask_;
};

// Verifies ordering, spectral split, F(0)=0, sigma(0)=0 and computes L1, L2.
SpectralProblem build_problem(const ProblemConfig& cfg);

// Neumann cosine traces e_k(0), e_k(1) with e_0 = 1, e_k = sqrt(2) cos(pi k x).
double neumann_trace_left(std::size_t k);
double neumann_trace_right(std::size_t k);

Eigen::VectorXd semigroup_apply(const SpectralProblem& p, double t, const Eigen::VectorXd& v, Block block);
Eigen::VectorXd project(const SpectralProblem& p, const Eigen::VectorXd& v, Side side);

struct GapInputs {
  double K = 1.0;
  double L1 = 0.0;
  double L2 = 0.0;
  double alpha = 0.0;
  double gamma = 0.0;
};

GapInputs gap_inputs(const SpectralProblem& p);

struct GapSide {
  double value = 0.0;
  bool pass = false;
  // K-scaled contributions in formula order.
  std::vector<std::pair<std::string, double>> terms;
};

struct GapReport {
  double C_zeta = 0.0;
  std::optional<GapSide> unstable;  // eta
  std::optional<GapSide> stable;    // delta
  double eta() const { return unstable ? unstable->value : 0.0; }
  double delta() const { return stable ? stable->value : 0.0; }
  bool pass_unstable() const { return unstable && unstable->pass; }
  bool pass_stable() const { return stable && stable->pass; }
};

GapReport gap_unstable(const GapInputs& in, double C_zeta);
GapReport gap_stable(const GapInputs& in, double C_zeta);
GapReport gap_report(const GapInputs& in, double C_zeta);
GapReport gap_unstable(const SpectralProblem& p, double C_zeta);
GapReport gap_stable(const SpectralProblem& p, double C_zeta);
GapReport gap_report(const SpectralProblem& p, double C_zeta);

// Sampled Lipschitz estimate with 10% inflation, used for custom fields.
double estimate_lipschitz(const VectorField& f, std::size_t dim, double scale, std::size_t n_pairs,
                          unsigned long long seed);

}  // namespace lpm
