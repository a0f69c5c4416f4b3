#pragma once

#include "lpm/spectral_problem.hpp"

#include "json.hpp"

#include <string>

namespace lpm {

// Problem file schema (JSON):
//   eigenvalues     [number]            required
//   unstable_modes  [index]             optional, default {k : lambda_k >= alpha}
//   alpha, beta, gamma, zeta  number    required
//   K               number              optional, default 1
//   basis           "abstract" | "neumann_cosine"
//   ladder          [number]            optional regularization ladder
//   nonlinearity    {kind: zero | linear | saturated_polynomial | boundary_example, ...}
//     linear:               matrix [[number]]
//     saturated_polynomial: radius, terms [{target, source, power, coefficient}]
//     boundary_example:     g0, g1, g2, radius
//   noise           {kind: zero | diagonal_linear | saturated, slopes, weights, radius}
// Unknown keys are rejected.
ProblemConfig problem_config_from_json(const nlohmann::json& j);
nlohmann::json problem_config_to_json(const ProblemConfig& cfg);

// Accepts either a bare problem object or a document with a "problem" member.
nlohmann::json read_json_file(const std::string& path);

}  // namespace lpm
