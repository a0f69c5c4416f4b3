#include "doctest.h"

#include "lpm/cli.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "lpm");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return lpm::run_cli(static_cast<int>(argv.size()), argv.data());
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("lpm_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

fs::path write_config(const fs::path& dir, const nlohmann::json& j) {
  const fs::path f = dir / "config.json";
  std::ofstream(f) << j.dump();
  return f;
}

nlohmann::json linear_problem(double b) {
  return {{"problem",
           {{"eigenvalues", {1.0, -1.0}},
            {"alpha", 1.0},
            {"beta", -1.0},
            {"gamma", 0.5},
            {"zeta", -0.5},
            {"nonlinearity", {{"kind", "linear"}, {"matrix", {{0.0, b}, {b, 0.0}}}}}}},
          {"solver", {{"C_zeta", 1.0}, {"dt", 0.01}, {"anchors", {{1.0, 0.0}}}}}};
}

}  // namespace

TEST_CASE("parse errors map to the configuration exit code") {
  CHECK(run({"no-such-command"}) == lpm::kExitConfigError);
  CHECK(run({"example-pde", "--modes", "x"}) == lpm::kExitConfigError);
}

TEST_CASE("check-gap reports pass and fail") {
  const fs::path d = scratch("gap");
  const fs::path ok = write_config(d, linear_problem(0.05));
  CHECK(run({"check-gap", "--config", ok.string(), "--out", (d / "ok").string()}) == lpm::kExitOk);
  CHECK(fs::exists(d / "ok" / "gap_report.json"));
  CHECK(fs::exists(d / "ok" / "manifest.json"));
  const fs::path bad = write_config(d, linear_problem(0.9));
  CHECK(run({"check-gap", "--config", bad.string(), "--out", (d / "bad").string()}) == lpm::kExitGapFail);
}

TEST_CASE("unknown configuration keys are rejected") {
  const fs::path d = scratch("keys");
  nlohmann::json j = linear_problem(0.05);
  j["solver"]["tolerance"] = 1e-3;
  const fs::path f = write_config(d, j);
  CHECK(run({"solve-unstable", "--config", f.string(), "--out", (d / "o").string()}) == lpm::kExitConfigError);
}

TEST_CASE("solve-unstable writes graph files") {
  const fs::path d = scratch("solve");
  const fs::path f = write_config(d, linear_problem(0.05));
  CHECK(run({"solve-unstable", "--config", f.string(), "--out", (d / "o").string()}) == lpm::kExitOk);
  CHECK(fs::exists(d / "o" / "unstable_graph.csv"));
  std::ifstream in(d / "o" / "unstable_graph.json");
  const auto j = nlohmann::json::parse(in);
  CHECK(j.at("graphs").size() == 1);
  CHECK(j.at("certified").get<bool>());
}

TEST_CASE("fnv1a hash is stable") {
  CHECK(lpm::fnv1a_hex("") == "cbf29ce484222325");
  CHECK(lpm::fnv1a_hex("a") == "af63dc4c8601ec8c");
}
