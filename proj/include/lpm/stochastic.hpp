#pragma once

#include "lpm/spectral_problem.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace lpm {

// Uniform grid anchored on integer multiples of dt: t_j = (start_index + j) dt.
struct TimeGrid {
  std::int64_t start_index = 0;
  double dt = 0.01;
  std::size_t n_steps = 0;

  static TimeGrid from_start(double t_start, double dt, std::size_t n_steps);
  // Grid ending at t_end covering at least `length`.
  static TimeGrid ending_at(double t_end, double length, double dt);
  static TimeGrid starting_at(double t_start, double length, double dt);

  double t_start() const { return static_cast<double>(start_index) * dt; }
  double t_end() const { return time(n_steps); }
  double time(std::size_t j) const { return static_cast<double>(start_index + static_cast<std::int64_t>(j)) * dt; }
  std::size_t n_points() const { return n_steps + 1; }
  bool same_spacing(const TimeGrid& o) const;
  // Index of this grid's node t in `outer`, or throws GridMismatch.
  std::size_t offset_in(const TimeGrid& outer) const;
};

// splitmix64 counter engine keyed by (seed, sample, step).
struct CounterEngine {
  using result_type = std::uint64_t;
  std::uint64_t state;

  CounterEngine(std::uint64_t seed, std::uint64_t sample, std::int64_t step);
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type(0); }
  result_type operator()();
};

// Two-sided Q-Wiener increments on a grid. Increments are pure functions of
// (seed, sample, absolute fine step), so any window or coarsening of the same
// seed sees identical underlying noise. Small ensembles are materialized.
class WienerEnsemble {
 public:
  static constexpr std::size_t kDefaultCacheLimit = std::size_t(1) << 25;

  WienerEnsemble(std::uint64_t seed, TimeGrid grid, Eigen::VectorXd weights, std::size_t n_samples,
                 std::size_t substeps = 1, std::size_t cache_limit = kDefaultCacheLimit);

  std::uint64_t seed() const { return seed_; }
  const TimeGrid& grid() const { return grid_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  std::size_t n_samples() const { return n_samples_; }
  std::size_t n_modes() const { return static_cast<std::size_t>(weights_.size()); }
  std::size_t substeps() const { return substeps_; }
  bool materialized() const { return static_cast<bool>(cache_); }

  // Increment over [t_step, t_step+1).
  void increment(std::size_t sample, std::size_t step, double* out) const;
  // W(t_j) with W(0) = 0.
  Eigen::MatrixXd values_at(std::size_t step) const;

  // Same noise on a coarser grid (dt * factor).
  WienerEnsemble coarsened(std::size_t factor) const;
  // Same noise on an aligned sub-window.
  WienerEnsemble restricted(const TimeGrid& sub) const;

 private:
  void fine_increment(std::size_t sample, std::int64_t fine_index, double* out) const;
  void compute_increment(std::size_t sample, std::size_t step, double* out) const;

  std::uint64_t seed_;
  TimeGrid grid_;
  Eigen::VectorXd weights_;
  Eigen::VectorXd scale_;  // sqrt(q_k dt_fine)
  std::size_t n_samples_;
  std::size_t substeps_;
  std::shared_ptr<const std::vector<double>> cache_;
};

WienerEnsemble sample_wiener(std::uint64_t seed, const TimeGrid& grid, const NoiseModel& noise, std::size_t n_samples);

// Values stored [point][sample][mode], point = 0..n_steps.
class ProcessEnsemble {
 public:
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  ProcessEnsemble() = default;
  ProcessEnsemble(TimeGrid grid, std::size_t n_samples, std::size_t n_modes, std::uint64_t filtration_tag = 0);

  const TimeGrid& grid() const { return grid_; }
  std::size_t n_points() const { return grid_.n_points(); }
  std::size_t n_samples() const { return n_samples_; }
  std::size_t n_modes() const { return n_modes_; }
  std::uint64_t filtration_tag() const { return tag_; }
  void set_filtration_tag(std::uint64_t t) { tag_ = t; }

  double* state(std::size_t point, std::size_t sample) { return data_.data() + index(point, sample); }
  const double* state(std::size_t point, std::size_t sample) const { return data_.data() + index(point, sample); }
  Eigen::Map<RowMatrix> slice(std::size_t point);
  Eigen::Map<const RowMatrix> slice(std::size_t point) const;
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  ProcessEnsemble window(std::size_t first_point, std::size_t n_steps) const;

 private:
  std::size_t index(std::size_t point, std::size_t sample) const { return (point * n_samples_ + sample) * n_modes_; }

  TimeGrid grid_;
  std::size_t n_samples_ = 0;
  std::size_t n_modes_ = 0;
  std::uint64_t tag_ = 0;
  std::vector<double> data_;
};

// Exponential Euler-Maruyama for the mild formulation. u0 has one row per sample,
// or a single row broadcast to all samples.
ProcessEnsemble integrate_mild(const SpectralProblem& p, const Eigen::MatrixXd& u0, const TimeGrid& grid,
                               const WienerEnsemble& W);

inline constexpr double kOverflowBound = 1e12;

double ms_norm(const ProcessEnsemble& ens, std::size_t point);
double ms_norm(const Eigen::Ref<const Eigen::MatrixXd>& samples);

enum class Direction { Backward, Forward };

// sup over nodes in the direction's range of e^{-gamma t} ms_norm(t).
// Backward: t <= anchor (default grid end). Forward: t >= anchor (default grid start).
double weighted_norm(const ProcessEnsemble& ens, double gamma, Direction dir);
double weighted_norm(const ProcessEnsemble& ens, double gamma, Direction dir, double anchor);
// weighted_norm(a - b) without materializing the difference.
double weighted_distance(const ProcessEnsemble& a, const ProcessEnsemble& b, double gamma);

// Deterministic sum over samples: chunk partials reduced in chunk order.
double ordered_sample_sum(std::size_t n_samples, const std::function<double(std::size_t)>& term);

// CSV rows "sample,step,mode,value" (17 significant digits) for the listed points.
void write_snapshot_csv(const ProcessEnsemble& ens, const std::vector<std::size_t>& points, std::ostream& os);
// Little-endian binary dump: "LPMENS01", u64 n_points, u64 n_samples, u64 n_modes,
// i64 start_index, f64 dt, then row-major f64 values [point][sample][mode].
void write_binary(const ProcessEnsemble& ens, const std::string& path);
ProcessEnsemble read_binary(const std::string& path);

}  // namespace lpm
