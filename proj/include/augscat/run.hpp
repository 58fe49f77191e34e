#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "augscat/config.hpp"
#include "augscat/output.hpp"

namespace augscat {

inline constexpr const char* kToolVersion = "augscat 1.0.0";

struct RunOptions {
  std::string out_dir = "out";
  int threads = 1;
  bool strict = false;
};

struct StageReport {
  std::string stage;
  std::string status = "ok";  // ok, warning, failed, error
  Json residuals = Json::object();
  std::vector<std::string> warnings;
  std::string error;
};

struct RunManifest {
  std::string command;
  Json config = Json::object();
  std::string version = kToolVersion;
  double wall_time = 0.0;
  int threads = 1;
  std::vector<StageReport> stages;
  Json outputs = Json::array();
  int exit_code = 0;  // 0 ok, 1 stage error, 3 invariant failure

  Json to_json() const;
};

// Executes the pipeline of one command; writes outputs and manifest.json.
RunManifest run(const RunConfig& config, const RunOptions& options);

// Randomized invariant suite (flux antisymmetry, pairing normalization,
// unitarity, compatibility pairings) driven by `seed`.
RunManifest selfcheck(std::uint64_t seed, const RunOptions& options);

}  // namespace augscat
