#include "lpm/stochastic.hpp"

#include "lpm/error.hpp"
#include "lpm/parallel.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>

namespace lpm {

static_assert(std::endian::native == std::endian::little, "binary dump assumes a little-endian host");

namespace {

std::int64_t lattice_index(double t, double dt) {
  if (!(dt > 0)) throw Error(ErrorCode::ConfigError, "dt must be positive");
  const double r = t / dt;
  const auto idx = static_cast<std::int64_t>(std::llround(r));
  if (std::abs(static_cast<double>(idx) * dt - t) > 1e-9 * std::max(1.0, std::abs(t))) {
    std::ostringstream os;
    os << "time " << t << " is not a multiple of dt = " << dt;
    throw Error(ErrorCode::GridMismatch, os.str());
  }
  return idx;
}

std::size_t steps_for(double length, double dt) {
  if (!(length >= 0)) throw Error(ErrorCode::ConfigError, "window length must be >= 0");
  return static_cast<std::size_t>(std::ceil(length / dt - 1e-9));
}

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

TimeGrid TimeGrid::from_start(double t_start, double dt, std::size_t n_steps) {
  return {lattice_index(t_start, dt), dt, n_steps};
}

TimeGrid TimeGrid::ending_at(double t_end, double length, double dt) {
  const std::int64_t e = lattice_index(t_end, dt);
  const std::size_t n = steps_for(length, dt);
  return {e - static_cast<std::int64_t>(n), dt, n};
}

TimeGrid TimeGrid::starting_at(double t_start, double length, double dt) {
  return {lattice_index(t_start, dt), dt, steps_for(length, dt)};
}

bool TimeGrid::same_spacing(const TimeGrid& o) const { return std::abs(dt - o.dt) <= 1e-14 * dt; }

std::size_t TimeGrid::offset_in(const TimeGrid& outer) const {
  if (!same_spacing(outer)) throw Error(ErrorCode::GridMismatch, "grid spacing differs from the noise grid");
  const std::int64_t off = start_index - outer.start_index;
  if (off < 0 || off + static_cast<std::int64_t>(n_steps) > static_cast<std::int64_t>(outer.n_steps))
    throw Error(ErrorCode::GridMismatch, "grid is not contained in the noise window");
  return static_cast<std::size_t>(off);
}

CounterEngine::CounterEngine(std::uint64_t seed, std::uint64_t sample, std::int64_t step) {
  std::uint64_t h = mix64(seed + 0x9E3779B97F4A7C15ULL);
  h = mix64(h ^ (sample * 0xD1B54A32D192ED03ULL + 0x632BE59BD9B4E019ULL));
  h = mix64(h ^ (static_cast<std::uint64_t>(step) * 0x8CB92BA72F3D8DD7ULL + 0xA0761D6478BD642FULL));
  state = h;
}

CounterEngine::result_type CounterEngine::operator()() {
  state += 0x9E3779B97F4A7C15ULL;
  return mix64(state);
}

WienerEnsemble::WienerEnsemble(std::uint64_t seed, TimeGrid grid, Eigen::VectorXd weights, std::size_t n_samples,
                               std::size_t substeps, std::size_t cache_limit)
    : seed_(seed), grid_(grid), weights_(std::move(weights)), n_samples_(n_samples), substeps_(substeps) {
  if (weights_.size() == 0) throw Error(ErrorCode::ConfigError, "noise needs at least one mode");
  if (n_samples_ == 0) throw Error(ErrorCode::ConfigError, "need at least one sample");
  if (substeps_ == 0) throw Error(ErrorCode::ConfigError, "substeps must be >= 1");
  if (!(grid_.dt > 0)) throw Error(ErrorCode::ConfigError, "dt must be positive");
  scale_.resize(weights_.size());
  for (Eigen::Index k = 0; k < weights_.size(); ++k) {
    if (!(weights_(k) >= 0)) throw Error(ErrorCode::ConfigError, "covariance weights must be >= 0");
    scale_(k) = std::sqrt(weights_(k) * grid_.dt / static_cast<double>(substeps_));
  }
  const std::size_t total = n_samples_ * grid_.n_steps * n_modes();
  if (total > 0 && total <= cache_limit) {
    auto buf = std::make_shared<std::vector<double>>(total);
    const std::size_t per = grid_.n_steps * n_modes();
    for_each_chunk(n_samples_, [&](std::size_t, std::size_t b, std::size_t e) {
      for (std::size_t s = b; s < e; ++s)
        for (std::size_t j = 0; j < grid_.n_steps; ++j) compute_increment(s, j, buf->data() + s * per + j * n_modes());
    });
    cache_ = buf;
  }
}

void WienerEnsemble::fine_increment(std::size_t sample, std::int64_t fine_index, double* out) const {
  CounterEngine eng(seed_, sample, fine_index);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (Eigen::Index k = 0; k < scale_.size(); ++k) out[k] = scale_(k) * nd(eng);
}

void WienerEnsemble::compute_increment(std::size_t sample, std::size_t step, double* out) const {
  const std::int64_t base = (grid_.start_index + static_cast<std::int64_t>(step)) * static_cast<std::int64_t>(substeps_);
  if (substeps_ == 1) {
    fine_increment(sample, base, out);
    return;
  }
  const std::size_t q = n_modes();
  double tmp[64];
  std::vector<double> heap;
  double* t = tmp;
  if (q > 64) {
    heap.resize(q);
    t = heap.data();
  }
  std::fill(out, out + q, 0.0);
  for (std::size_t i = 0; i < substeps_; ++i) {
    fine_increment(sample, base + static_cast<std::int64_t>(i), t);
    for (std::size_t k = 0; k < q; ++k) out[k] += t[k];
  }
}

void WienerEnsemble::increment(std::size_t sample, std::size_t step, double* out) const {
  if (cache_) {
    const std::size_t q = n_modes();
    const double* src = cache_->data() + (sample * grid_.n_steps + step) * q;
    std::copy(src, src + q, out);
    return;
  }
  compute_increment(sample, step, out);
}

Eigen::MatrixXd WienerEnsemble::values_at(std::size_t step) const {
  const std::size_t q = n_modes();
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_samples_), static_cast<Eigen::Index>(q));
  const std::int64_t a = grid_.start_index + static_cast<std::int64_t>(step);
  const std::int64_t fa = a * static_cast<std::int64_t>(substeps_);
  for_each_chunk(n_samples_, [&](std::size_t, std::size_t b, std::size_t e) {
    std::vector<double> inc(q);
    for (std::size_t s = b; s < e; ++s) {
      std::vector<double> acc(q, 0.0);
      if (fa >= 0) {
        for (std::int64_t i = 0; i < fa; ++i) {
          fine_increment(s, i, inc.data());
          for (std::size_t k = 0; k < q; ++k) acc[k] += inc[k];
        }
      } else {
        for (std::int64_t i = fa; i < 0; ++i) {
          fine_increment(s, i, inc.data());
          for (std::size_t k = 0; k < q; ++k) acc[k] -= inc[k];
        }
      }
      for (std::size_t k = 0; k < q; ++k) W(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(k)) = acc[k];
    }
  });
  return W;
}

WienerEnsemble WienerEnsemble::coarsened(std::size_t factor) const {
  if (factor == 0) throw Error(ErrorCode::ConfigError, "coarsening factor must be >= 1");
  const auto f = static_cast<std::int64_t>(factor);
  if (grid_.start_index % f != 0 || grid_.n_steps % factor != 0)
    throw Error(ErrorCode::GridMismatch, "grid is not divisible by the coarsening factor");
  WienerEnsemble c = *this;
  c.grid_ = TimeGrid{grid_.start_index / f, grid_.dt * static_cast<double>(factor), grid_.n_steps / factor};
  c.substeps_ = substeps_ * factor;
  c.cache_.reset();
  return c;
}

WienerEnsemble WienerEnsemble::restricted(const TimeGrid& sub) const {
  const std::size_t off = sub.offset_in(grid_);
  WienerEnsemble r = *this;
  r.grid_ = TimeGrid{sub.start_index, grid_.dt, sub.n_steps};
  if (cache_) {
    const std::size_t q = n_modes();
    auto buf = std::make_shared<std::vector<double>>(n_samples_ * sub.n_steps * q);
    for (std::size_t s = 0; s < n_samples_; ++s) {
      const double* src = cache_->data() + (s * grid_.n_steps + off) * q;
      std::copy(src, src + sub.n_steps * q, buf->data() + s * sub.n_steps * q);
    }
    r.cache_ = buf;
  }
  return r;
}

WienerEnsemble sample_wiener(std::uint64_t seed, const TimeGrid& grid, const NoiseModel& noise, std::size_t n_samples) {
  Eigen::VectorXd q = noise.weights;
  if (q.size() == 0) throw Error(ErrorCode::ConfigError, "noise model has no modes");
  return WienerEnsemble(seed, grid, q, n_samples);
}

namespace {

// 2^31 doubles (16 GiB) per ensemble buffer.
constexpr std::size_t kMaxEnsembleValues = std::size_t(1) << 31;

std::size_t checked_size(const TimeGrid& grid, std::size_t n_samples, std::size_t n_modes) {
  const double values = static_cast<double>(grid.n_points()) * static_cast<double>(n_samples) *
                        static_cast<double>(n_modes);
  if (values > static_cast<double>(kMaxEnsembleValues)) {
    std::ostringstream os;
    os << "ensemble of " << grid.n_points() << " points x " << n_samples << " samples x " << n_modes
       << " modes exceeds the buffer limit";
    throw Error(ErrorCode::ResourceLimit, os.str());
  }
  return grid.n_points() * n_samples * n_modes;
}

}  // namespace

ProcessEnsemble::ProcessEnsemble(TimeGrid grid, std::size_t n_samples, std::size_t n_modes, std::uint64_t tag)
    : grid_(grid), n_samples_(n_samples), n_modes_(n_modes), tag_(tag),
      data_(checked_size(grid, n_samples, n_modes), 0.0) {}

Eigen::Map<ProcessEnsemble::RowMatrix> ProcessEnsemble::slice(std::size_t point) {
  return {data_.data() + index(point, 0), static_cast<Eigen::Index>(n_samples_), static_cast<Eigen::Index>(n_modes_)};
}

Eigen::Map<const ProcessEnsemble::RowMatrix> ProcessEnsemble::slice(std::size_t point) const {
  return {data_.data() + index(point, 0), static_cast<Eigen::Index>(n_samples_), static_cast<Eigen::Index>(n_modes_)};
}

ProcessEnsemble ProcessEnsemble::window(std::size_t first_point, std::size_t n_steps) const {
  if (first_point + n_steps > grid_.n_steps)
    throw Error(ErrorCode::GridMismatch, "window exceeds the ensemble");
  TimeGrid g{grid_.start_index + static_cast<std::int64_t>(first_point), grid_.dt, n_steps};
  ProcessEnsemble w(g, n_samples_, n_modes_, tag_);
  const std::size_t stride = n_samples_ * n_modes_;
  std::copy(data_.begin() + static_cast<std::ptrdiff_t>(first_point * stride),
            data_.begin() + static_cast<std::ptrdiff_t>((first_point + n_steps + 1) * stride), w.data_.begin());
  return w;
}

ProcessEnsemble integrate_mild(const SpectralProblem& p, const Eigen::MatrixXd& u0, const TimeGrid& grid,
                               const WienerEnsemble& W) {
  const std::size_t m = p.dim();
  const std::size_t n = W.n_samples();
  if (static_cast<std::size_t>(u0.cols()) != m) throw Error(ErrorCode::ConfigError, "initial datum has wrong dimension");
  if (u0.rows() != 1 && static_cast<std::size_t>(u0.rows()) != n)
    throw Error(ErrorCode::GridMismatch, "initial datum rows must match the noise sample count");
  if (W.n_modes() != m) throw Error(ErrorCode::GridMismatch, "noise modes must match problem modes");
  const std::size_t off = grid.offset_in(W.grid());
  if (p.nonlinearity.kind == NonlinearityKind::BoundaryExample && !(p.loading_ladder && p.loading_ladder->converged))
    throw Error(ErrorCode::LadderNotConverged, "boundary loading ladder did not converge");

  ProcessEnsemble out(grid, n, m, W.seed());
  Eigen::VectorXd decay(static_cast<Eigen::Index>(m));
  for (std::size_t k = 0; k < m; ++k)
    decay(static_cast<Eigen::Index>(k)) = std::exp(p.eigenvalues(static_cast<Eigen::Index>(k)) * grid.dt);
  const double dt = grid.dt;

  for_each_chunk(n, [&](std::size_t, std::size_t b, std::size_t e) {
    std::vector<double> f(m), g(m), dw(m);
    for (std::size_t s = b; s < e; ++s) {
      double* x0 = out.state(0, s);
      for (std::size_t k = 0; k < m; ++k)
        x0[k] = u0(u0.rows() == 1 ? 0 : static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(k));
      for (std::size_t j = 0; j < grid.n_steps; ++j) {
        const double* x = out.state(j, s);
        double* y = out.state(j + 1, s);
        p.drift(x, f.data());
        p.diffusion_coefficients(x, g.data());
        W.increment(s, off + j, dw.data());
        for (std::size_t k = 0; k < m; ++k) {
          const double v = decay(static_cast<Eigen::Index>(k)) * (x[k] + dt * f[k] + g[k] * dw[k]);
          if (!std::isfinite(v) || std::abs(v) > kOverflowBound) {
            std::ostringstream os;
            os << "state overflow at step " << j + 1 << ", sample " << s << ", mode " << k;
            throw Error(ErrorCode::NonfiniteState, os.str());
          }
          y[k] = v;
        }
      }
    }
  });
  return out;
}

double ordered_sample_sum(std::size_t n_samples, const std::function<double(std::size_t)>& term) {
  std::vector<double> partial(chunk_count(n_samples), 0.0);
  for_each_chunk(n_samples, [&](std::size_t c, std::size_t b, std::size_t e) {
    double s = 0.0;
    for (std::size_t i = b; i < e; ++i) s += term(i);
    partial[c] = s;
  });
  double total = 0.0;
  for (double v : partial) total += v;
  return total;
}

double ms_norm(const ProcessEnsemble& ens, std::size_t point) {
  if (point >= ens.n_points()) throw Error(ErrorCode::GridMismatch, "point out of range");
  const std::size_t m = ens.n_modes();
  const double s = ordered_sample_sum(ens.n_samples(), [&](std::size_t i) {
    const double* x = ens.state(point, i);
    double a = 0.0;
    for (std::size_t k = 0; k < m; ++k) a += x[k] * x[k];
    return a;
  });
  return std::sqrt(s / static_cast<double>(ens.n_samples()));
}

double ms_norm(const Eigen::Ref<const Eigen::MatrixXd>& samples) {
  if (samples.rows() == 0) return 0.0;
  const double s = ordered_sample_sum(static_cast<std::size_t>(samples.rows()),
                                      [&](std::size_t i) { return samples.row(static_cast<Eigen::Index>(i)).squaredNorm(); });
  return std::sqrt(s / static_cast<double>(samples.rows()));
}

double weighted_norm(const ProcessEnsemble& ens, double gamma, Direction dir) {
  const TimeGrid& g = ens.grid();
  return weighted_norm(ens, gamma, dir, dir == Direction::Backward ? g.t_end() : g.t_start());
}

double weighted_norm(const ProcessEnsemble& ens, double gamma, Direction dir, double anchor) {
  const TimeGrid& g = ens.grid();
  double best = 0.0;
  for (std::size_t j = 0; j < ens.n_points(); ++j) {
    const double t = g.time(j);
    const bool in = dir == Direction::Backward ? t <= anchor + 1e-12 * g.dt : t >= anchor - 1e-12 * g.dt;
    if (!in) continue;
    best = std::max(best, std::exp(-gamma * t) * ms_norm(ens, j));
  }
  return best;
}

double weighted_distance(const ProcessEnsemble& a, const ProcessEnsemble& b, double gamma) {
  if (a.n_points() != b.n_points() || a.n_samples() != b.n_samples() || a.n_modes() != b.n_modes() ||
      a.grid().start_index != b.grid().start_index)
    throw Error(ErrorCode::GridMismatch, "ensembles differ in shape");
  const std::size_t m = a.n_modes();
  double best = 0.0;
  for (std::size_t j = 0; j < a.n_points(); ++j) {
    const double s = ordered_sample_sum(a.n_samples(), [&](std::size_t i) {
      const double* x = a.state(j, i);
      const double* y = b.state(j, i);
      double acc = 0.0;
      for (std::size_t k = 0; k < m; ++k) acc += (x[k] - y[k]) * (x[k] - y[k]);
      return acc;
    });
    best = std::max(best, std::exp(-gamma * a.grid().time(j)) * std::sqrt(s / static_cast<double>(a.n_samples())));
  }
  return best;
}

void write_snapshot_csv(const ProcessEnsemble& ens, const std::vector<std::size_t>& points, std::ostream& os) {
  os << "sample,step,mode,value\r\n";
  char buf[64];
  for (std::size_t j : points) {
    if (j >= ens.n_points()) throw Error(ErrorCode::GridMismatch, "snapshot point out of range");
    for (std::size_t s = 0; s < ens.n_samples(); ++s)
      for (std::size_t k = 0; k < ens.n_modes(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", ens.state(j, s)[k]);
        os << s << ',' << j << ',' << k << ',' << buf << "\r\n";
      }
  }
}

void write_binary(const ProcessEnsemble& ens, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::ConfigError, "cannot write '" + path + "'");
  const char magic[8] = {'L', 'P', 'M', 'E', 'N', 'S', '0', '1'};
  out.write(magic, 8);
  const std::uint64_t dims[3] = {ens.n_points(), ens.n_samples(), ens.n_modes()};
  out.write(reinterpret_cast<const char*>(dims), sizeof dims);
  const std::int64_t start = ens.grid().start_index;
  out.write(reinterpret_cast<const char*>(&start), sizeof start);
  const double dt = ens.grid().dt;
  out.write(reinterpret_cast<const char*>(&dt), sizeof dt);
  out.write(reinterpret_cast<const char*>(ens.data().data()),
            static_cast<std::streamsize>(ens.data().size() * sizeof(double)));
}

ProcessEnsemble read_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "LPMENS01", 8) != 0) throw Error(ErrorCode::ConfigError, "not an ensemble dump");
  std::uint64_t dims[3];
  std::int64_t start = 0;
  double dt = 0;
  in.read(reinterpret_cast<char*>(dims), sizeof dims);
  in.read(reinterpret_cast<char*>(&start), sizeof start);
  in.read(reinterpret_cast<char*>(&dt), sizeof dt);
  if (!in || dims[0] == 0) throw Error(ErrorCode::ConfigError, "truncated ensemble header");
  ProcessEnsemble e(TimeGrid{start, dt, dims[0] - 1}, dims[1], dims[2]);
  in.read(reinterpret_cast<char*>(e.data().data()), static_cast<std::streamsize>(e.data().size() * sizeof(double)));
  if (!in) throw Error(ErrorCode::ConfigError, "truncated ensemble payload");
  return e;
}

}  // namespace lpm
