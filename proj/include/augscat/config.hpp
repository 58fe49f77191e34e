#pragma once

#include <optional>
#include <string>
#include <vector>

#include "augscat/junction.hpp"

namespace augscat {

enum class Command { Spectrum, Modes, Scatter, Sweep, Trapped, ModelProblem };

std::string to_string(Command c);
Command command_from_string(const std::string& name);

// Single-arm cross-section for `spectrum` and `modes`.
struct SectionConfig {
  double width = 1.0;
  BoundaryKind boundary = BoundaryKind::Neumann;
  std::optional<std::vector<double>> profile;
  int modes = 8;
  double grid_step = 1.0 / 256.0;
};

struct ModelConfig {
  double k_infinity = 2.5;
  double amplitude = 0.1;
  double decay_exponent = 1.0;
  std::vector<double> T{10.0, 20.0, 40.0};
  double gamma = -1.0;  // negative: halfway between the strip and the next rate
  double L = -1.0;
  double series_tol = 1e-8;
  double dt = 1e-3;
};

struct RunConfig {
  Command command = Command::Scatter;
  std::string name = "run";

  JunctionGeometry geometry;
  SectionConfig section;
  ModelConfig model;

  double k = 0.0;
  double k_lo = 0.0, k_hi = 0.0;
  bool has_k = false, has_range = false;
  double gamma = -1.0;
  double beta = 0.0;  // 0: classical scattering

  double h = 1.0 / 64.0;
  int mode_cutoff = -1;
  double threshold_tol = -1.0;
  int points = 200;
  double eig_tolerance = 1e-2;
  double unitarity_tolerance = 1e-3;
  double guard = 1e-3;

  bool write_fields = false;
  std::vector<std::string> formats{"json", "csv"};

  std::string source_text;  // the config as given

  AssemblyOptions assembly() const;
};

RunConfig parse_config(const std::string& text);
RunConfig parse_config_file(const std::string& path);

}  // namespace augscat
