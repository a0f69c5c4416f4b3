#pragma once

#include "json.hpp"

#include <string>
#include <vector>

namespace lpm {

// Exit codes of the command-line front end.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitGapFail = 2,
  kExitNonConvergence = 3,
  kExitConfigError = 4,
};

struct RunManifest {
  std::string subcommand;
  std::string config_hash;  // FNV-1a 64 of the effective configuration
  unsigned long long seed = 0;
  std::string version;
  std::string started_at;  // UTC wall clock, kept out of the numeric payloads
  double wall_seconds = 0.0;
  std::vector<std::string> outputs;

  nlohmann::json to_json() const;
};

std::string fnv1a_hex(const std::string& bytes);

// Parses argv and runs one subcommand; returns an ExitCode.
int run_cli(int argc, char** argv);

}  // namespace lpm
