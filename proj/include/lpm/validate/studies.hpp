#pragma once

#include "lpm/lyapunov_perron.hpp"
#include "lpm/resolvent.hpp"
#include "lpm/spectral_problem.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace lpm {

enum class StudyParameter { Dt, NSamples, TBack, Lambda };

const char* to_string(StudyParameter s);
StudyParameter study_parameter_from_string(const std::string& s);

struct StudyRow {
  double value = 0.0;
  double observable = 0.0;
  double error = 0.0;
};

struct StudyTable {
  StudyParameter parameter = StudyParameter::Dt;
  std::string observable;
  std::vector<StudyRow> rows;
  double slope = 0.0;     // least-squares slope of log(error) against log(value)
  bool monotone = false;  // error strictly decreases along the listed refinement order
};

struct StudyOptions {
  Eigen::VectorXd u0;        // Dt, NSamples: initial state (defaults to all ones)
  double horizon = 1.0;      // Dt, NSamples: integration time
  std::size_t reference_factor = 16;  // Dt: reference step = min(dt) / factor
  std::size_t n_samples = 1000;       // Dt
  std::size_t replicates = 40;        // NSamples
  double dt = 1.0 / 64;               // NSamples
  std::uint64_t seed = 1;
  Eigen::VectorXd anchor;             // TBack: deterministic unstable anchor
  double reference_T = 0.0;           // TBack: reference horizon (default 2 * max value)
  XElement g;                         // Lambda: data to regularize
  LPConfig lp;                        // TBack
};

double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// Dt: strong error at the horizon against a fine reference on the same noise.
// NSamples: RMS over replicates of the error of the sample mean (requires zero drift nonlinearity).
// TBack: |h(T) - h(reference_T)| for the unstable graph.
// Lambda: |lambda R_lambda g - g|.
StudyTable refinement_study(const SpectralProblem& p, StudyParameter parameter, const std::vector<double>& values,
                            const StudyOptions& opts);

void write_study_csv(const StudyTable& t, std::ostream& os);

}  // namespace lpm
