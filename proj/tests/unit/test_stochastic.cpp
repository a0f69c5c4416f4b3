#include "doctest.h"

#include "lpm/error.hpp"
#include "lpm/parallel.hpp"
#include "lpm/stochastic.hpp"
#include "../support.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

using namespace lpm;
using namespace lpm::testing;

TEST_CASE("grids are anchored on multiples of dt") {
  const TimeGrid g = TimeGrid::ending_at(1.0, 0.55, 0.1);
  CHECK(g.t_end() == doctest::Approx(1.0));
  CHECK(g.n_steps == 6);
  const TimeGrid sub = TimeGrid::from_start(0.7, 0.1, 2);
  CHECK(sub.offset_in(g) == 3);
}

TEST_CASE("counter noise is a pure function of seed, sample and step") {
  const TimeGrid g = TimeGrid::from_start(-1.0, 0.01, 200);
  const WienerEnsemble a(9, g, vec({1.0, 0.5}), 64, 1, 0);
  const WienerEnsemble b(9, g, vec({1.0, 0.5}), 64);
  CHECK_FALSE(a.materialized());
  CHECK(b.materialized());
  double x[2], y[2];
  for (std::size_t s : {0u, 17u, 63u})
    for (std::size_t j : {0u, 99u, 199u}) {
      a.increment(s, j, x);
      b.increment(s, j, y);
      CHECK(x[0] == y[0]);
      CHECK(x[1] == y[1]);
    }
  const WienerEnsemble w = b.restricted(TimeGrid::from_start(0.0, 0.01, 50));
  w.increment(5, 0, x);
  b.increment(5, 100, y);
  CHECK(x[0] == y[0]);
}

TEST_CASE("coarsening sums the same fine increments") {
  const WienerEnsemble fine(4, TimeGrid::from_start(0.0, 0.01, 64), vec({1.0}), 16);
  const WienerEnsemble coarse = fine.coarsened(4);
  CHECK(coarse.grid().dt == doctest::Approx(0.04));
  const Eigen::MatrixXd a = fine.values_at(64), b = coarse.values_at(16);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("increments have variance q dt") {
  const std::size_t n = 40000;
  const WienerEnsemble w(3, TimeGrid::from_start(0.0, 0.25, 1), vec({2.0}), n);
  double s2 = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    double d;
    w.increment(s, 0, &d);
    s2 += d * d;
  }
  CHECK(s2 / n == doctest::Approx(0.5).epsilon(0.04));
}

TEST_CASE("zero noise integration is exact exponential decay") {
  const SpectralProblem p = wide_pair(Eigen::MatrixXd::Zero(2, 2));
  const TimeGrid g = TimeGrid::from_start(0.0, 0.01, 100);
  const WienerEnsemble W(1, g, vec({0.0, 0.0}), 3);
  const ProcessEnsemble u = integrate_mild(p, vec({1.0, 1.0}).transpose(), g, W);
  for (std::size_t s = 0; s < 3; ++s) {
    CHECK(u.state(100, s)[0] == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
    CHECK(u.state(100, s)[1] == doctest::Approx(std::exp(-4.0)).epsilon(1e-12));
  }
}

TEST_CASE("flow property: restarting at an interior node is bit-identical") {
  const SpectralProblem p = unit_pair(mat2(0.0, 0.1, 0.1, 0.0), 0.3);
  const TimeGrid g = TimeGrid::from_start(0.0, 0.01, 80);
  const WienerEnsemble W(12, g, p.noise.weights, 100);
  const ProcessEnsemble full = integrate_mild(p, vec({0.5, -0.2}).transpose(), g, W);
  const TimeGrid first = TimeGrid::from_start(0.0, 0.01, 30), second = TimeGrid::from_start(0.3, 0.01, 50);
  const ProcessEnsemble a = integrate_mild(p, vec({0.5, -0.2}).transpose(), first, W.restricted(first));
  const ProcessEnsemble b = integrate_mild(p, a.slice(30), second, W.restricted(second));
  for (std::size_t s = 0; s < 100; ++s)
    for (std::size_t k = 0; k < 2; ++k) CHECK(b.state(50, s)[k] == full.state(80, s)[k]);
}

TEST_CASE("results do not depend on the worker count") {
  const SpectralProblem p = unit_pair(mat2(0.0, 0.1, 0.1, 0.0), 0.3);
  const TimeGrid g = TimeGrid::from_start(0.0, 0.01, 40);
  const WienerEnsemble W(8, g, p.noise.weights, 3000);
  set_worker_count(1);
  const ProcessEnsemble a = integrate_mild(p, vec({0.5, 0.1}).transpose(), g, W);
  const double na = weighted_norm(a, 0.5, Direction::Forward);
  set_worker_count(5);
  const ProcessEnsemble b = integrate_mild(p, vec({0.5, 0.1}).transpose(), g, W);
  const double nb = weighted_norm(b, 0.5, Direction::Forward);
  set_worker_count(0);
  CHECK(a.data() == b.data());
  CHECK(na == nb);
}

TEST_CASE("weighted norms and distances") {
  const TimeGrid g = TimeGrid::from_start(-1.0, 0.5, 2);
  ProcessEnsemble e(g, 2, 1);
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t s = 0; s < 2; ++s) e.state(j, s)[0] = std::exp(0.5 * g.time(j));
  CHECK(weighted_norm(e, 0.5, Direction::Backward) == doctest::Approx(1.0));
  ProcessEnsemble z(g, 2, 1);
  CHECK(weighted_distance(e, z, 0.5) == doctest::Approx(1.0));
  CHECK(ms_norm(e, 2) == doctest::Approx(1.0));
}

TEST_CASE("snapshot and binary round trips") {
  const TimeGrid g = TimeGrid::from_start(0.0, 0.1, 2);
  ProcessEnsemble e(g, 2, 2);
  for (std::size_t i = 0; i < e.data().size(); ++i) e.data()[i] = 0.1 * static_cast<double>(i) - 0.3;
  std::ostringstream os;
  write_snapshot_csv(e, {2}, os);
  CHECK(os.str().rfind("sample,step,mode,value", 0) == 0);
  const auto path = (std::filesystem::temp_directory_path() / "lpm_unit_roundtrip.bin").string();
  write_binary(e, path);
  const ProcessEnsemble r = read_binary(path);
  std::filesystem::remove(path);
  CHECK(r.data() == e.data());
  CHECK(r.grid().n_steps == 2);
  CHECK(r.n_modes() == 2);
  CHECK_THROWS(e.window(1, 2));
}

TEST_CASE("oversized ensembles are refused before allocation") {
  try {
    ProcessEnsemble big(TimeGrid::from_start(0.0, 1e-4, 1000000), 100000, 4);
    FAIL("expected ResourceLimit");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ResourceLimit);
  }
}
