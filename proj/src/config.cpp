#include "augscat/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "augscat/error.hpp"

namespace augscat {

namespace {

[[noreturn]] void fail(const YAML::Node& n, const std::string& msg) {
  const YAML::Mark m = n.Mark();
  throw ConfigError(msg, m.is_null() ? -1 : m.line, m.is_null() ? -1 : m.column);
}

void check_keys(const YAML::Node& n, const std::string& where, const std::set<std::string>& allowed) {
  if (!n.IsMap()) fail(n, where + " must be a mapping");
  for (const auto& kv : n) {
    const std::string key = kv.first.as<std::string>();
    if (!allowed.count(key)) fail(kv.first, "unknown key `" + key + "` in " + where);
  }
}

template <class T>
T read(const YAML::Node& n, const std::string& field) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    fail(n, "field `" + field + "` has the wrong type");
  }
}

template <class T>
void get(const YAML::Node& parent, const char* key, T& out, const std::string& prefix = "") {
  const YAML::Node n = parent[key];
  if (n) out = read<T>(n, prefix + key);
}

void positive(const YAML::Node& parent, const char* key, double value, const std::string& prefix = "") {
  if (!(value > 0.0)) {
    const YAML::Node n = parent[key];
    const std::string msg = "field `" + prefix + key + "` must be positive";
    if (n) fail(n, msg);
    throw ConfigError(msg);
  }
}

ArmCoefficientProfile read_profile(const YAML::Node& n, const std::string& prefix) {
  check_keys(n, prefix, {"amplitude", "decay_exponent", "samples", "sample_step"});
  ArmCoefficientProfile p;
  get(n, "amplitude", p.amplitude, prefix + ".");
  get(n, "decay_exponent", p.decay_exponent, prefix + ".");
  get(n, "samples", p.samples, prefix + ".");
  get(n, "sample_step", p.sample_step, prefix + ".");
  try {
    p.validate();
  } catch (const Error& e) {
    fail(n, prefix + ": " + e.what());
  }
  return p;
}

JunctionGeometry read_geometry(const YAML::Node& n) {
  check_keys(n, "geometry", {"preset", "boundary", "width", "arm_length", "duct_length", "junction", "arms"});
  std::string preset = "custom";
  std::string boundary = "neumann";
  double width = 1.0, arm_length = 1.0, duct_length = 1.0;
  get(n, "preset", preset, "geometry.");
  get(n, "boundary", boundary, "geometry.");
  get(n, "width", width, "geometry.");
  get(n, "arm_length", arm_length, "geometry.");
  get(n, "duct_length", duct_length, "geometry.");
  positive(n, "width", width, "geometry.");
  positive(n, "arm_length", arm_length, "geometry.");
  positive(n, "duct_length", duct_length, "geometry.");
  BoundaryKind kind;
  try {
    kind = boundary_kind_from_string(boundary);
  } catch (const Error&) {
    fail(n["boundary"], "field `geometry.boundary` must be dirichlet or neumann");
  }
  JunctionGeometry g;
  if (preset == "duct") {
    g = straight_duct(duct_length, width, kind, arm_length);
  } else if (preset == "custom") {
    if (!n["junction"] || !n["arms"]) fail(n, "custom geometry needs `junction` and `arms`");
    g.name = "custom";
    g.boundary_kind = kind;
  } else {
    try {
      g = preset_geometry(preset, kind, width, arm_length);
    } catch (const Error&) {
      fail(n["preset"], "unknown geometry preset `" + preset + "`");
    }
  }
  if (const YAML::Node j = n["junction"]) {
    if (!j.IsSequence()) fail(j, "field `geometry.junction` must be a list of [x0, y0, x1, y1]");
    g.junction.clear();
    for (const auto& r : j) {
      const auto v = read<std::vector<double>>(r, "geometry.junction");
      if (v.size() != 4) fail(r, "junction rectangles are [x0, y0, x1, y1]");
      g.junction.push_back({v[0], v[1], v[2], v[3]});
    }
  }
  if (const YAML::Node arms = n["arms"]) {
    if (!arms.IsSequence()) fail(arms, "field `geometry.arms` must be a list");
    g.arms.clear();
    int id = 0;
    for (const auto& a : arms) {
      const std::string p = "geometry.arms[" + std::to_string(id) + "]";
      check_keys(a, p, {"side", "edge", "offset", "width", "length", "profile", "T"});
      ArmGeometry arm;
      arm.arm_id = id;
      arm.length = arm_length;
      std::string side = "east";
      get(a, "side", side, p + ".");
      try {
        arm.side = arm_side_from_string(side);
      } catch (const Error&) {
        fail(a["side"], "field `" + p + ".side` must be east, north, west or south");
      }
      get(a, "edge", arm.edge, p + ".");
      get(a, "offset", arm.offset, p + ".");
      get(a, "width", arm.width, p + ".");
      get(a, "length", arm.length, p + ".");
      get(a, "T", arm.T, p + ".");
      positive(a, "width", arm.width, p + ".");
      positive(a, "length", arm.length, p + ".");
      if (a["profile"]) arm.profile = read_profile(a["profile"], p + ".profile");
      g.arms.push_back(arm);
      ++id;
    }
  }
  try {
    g.validate();
  } catch (const Error& e) {
    fail(n, std::string("geometry: ") + e.what());
  }
  return g;
}

}  // namespace

std::string to_string(Command c) {
  switch (c) {
    case Command::Spectrum: return "spectrum";
    case Command::Modes: return "modes";
    case Command::Scatter: return "scatter";
    case Command::Sweep: return "sweep";
    case Command::Trapped: return "trapped";
    case Command::ModelProblem: return "model-problem";
  }
  return "?";
}

Command command_from_string(const std::string& name) {
  for (Command c : {Command::Spectrum, Command::Modes, Command::Scatter, Command::Sweep, Command::Trapped,
                    Command::ModelProblem}) {
    if (to_string(c) == name) return c;
  }
  throw ConfigError("unknown command `" + name + "`");
}

AssemblyOptions RunConfig::assembly() const {
  AssemblyOptions o;
  o.h = h;
  o.mode_cutoff = mode_cutoff;
  o.threshold_tol = threshold_tol;
  if (beta > 0.0) {
    o.mode = ScatteringMode::Augmented;
    o.beta = beta;
  }
  return o;
}

RunConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("malformed config: " + e.msg, e.mark.line, e.mark.column);
  }
  if (!root || root.IsNull()) throw ConfigError("empty config");
  check_keys(root, "config", {"command", "name", "geometry", "section", "model", "physics", "numerics", "output"});
  RunConfig c;
  c.source_text = text;
  if (!root["command"]) throw ConfigError("missing field `command`");
  try {
    c.command = command_from_string(read<std::string>(root["command"], "command"));
  } catch (const ConfigError& e) {
    if (e.line() >= 0) throw;
    fail(root["command"], e.what());
  }
  get(root, "name", c.name);

  const bool needs_geometry =
      c.command == Command::Scatter || c.command == Command::Sweep || c.command == Command::Trapped;
  if (const YAML::Node g = root["geometry"]) {
    c.geometry = read_geometry(g);
  } else if (needs_geometry) {
    throw ConfigError("command `" + to_string(c.command) + "` needs a `geometry` section");
  }

  if (const YAML::Node s = root["section"]) {
    check_keys(s, "section", {"width", "boundary", "profile", "modes", "grid_step"});
    get(s, "width", c.section.width, "section.");
    positive(s, "width", c.section.width, "section.");
    std::string b = "neumann";
    get(s, "boundary", b, "section.");
    try {
      c.section.boundary = boundary_kind_from_string(b);
    } catch (const Error&) {
      fail(s["boundary"], "field `section.boundary` must be dirichlet or neumann");
    }
    if (s["profile"]) c.section.profile = read<std::vector<double>>(s["profile"], "section.profile");
    get(s, "modes", c.section.modes, "section.");
    if (c.section.modes < 1) fail(s["modes"], "field `section.modes` must be at least 1");
    get(s, "grid_step", c.section.grid_step, "section.");
    positive(s, "grid_step", c.section.grid_step, "section.");
  }

  if (const YAML::Node m = root["model"]) {
    check_keys(m, "model", {"k_infinity", "amplitude", "decay_exponent", "T", "gamma", "L", "series_tol", "dt"});
    get(m, "k_infinity", c.model.k_infinity, "model.");
    positive(m, "k_infinity", c.model.k_infinity, "model.");
    get(m, "amplitude", c.model.amplitude, "model.");
    get(m, "decay_exponent", c.model.decay_exponent, "model.");
    positive(m, "decay_exponent", c.model.decay_exponent, "model.");
    if (m["T"]) {
      if (m["T"].IsSequence()) {
        c.model.T = read<std::vector<double>>(m["T"], "model.T");
      } else {
        c.model.T = {read<double>(m["T"], "model.T")};
      }
      if (c.model.T.empty()) fail(m["T"], "field `model.T` must not be empty");
      for (double t : c.model.T) {
        if (!(t > 0.0)) fail(m["T"], "field `model.T` must be positive");
      }
    }
    get(m, "gamma", c.model.gamma, "model.");
    get(m, "L", c.model.L, "model.");
    get(m, "series_tol", c.model.series_tol, "model.");
    positive(m, "series_tol", c.model.series_tol, "model.");
    get(m, "dt", c.model.dt, "model.");
    positive(m, "dt", c.model.dt, "model.");
  }

  if (const YAML::Node p = root["physics"]) {
    check_keys(p, "physics", {"k", "k_range", "gamma", "beta"});
    if (p["k"]) {
      c.k = read<double>(p["k"], "physics.k");
      c.has_k = true;
      positive(p, "k", c.k, "physics.");
    }
    if (p["k_range"]) {
      const auto r = read<std::vector<double>>(p["k_range"], "physics.k_range");
      if (r.size() != 2) fail(p["k_range"], "field `physics.k_range` must be [k_lo, k_hi]");
      if (!(r[0] > 0.0) || !(r[1] > r[0])) {
        fail(p["k_range"], "field `physics.k_range` must be nonempty, positive and increasing");
      }
      c.k_lo = r[0];
      c.k_hi = r[1];
      c.has_range = true;
    }
    get(p, "gamma", c.gamma, "physics.");
    get(p, "beta", c.beta, "physics.");
    if (c.beta < 0.0) fail(p["beta"], "field `physics.beta` must be nonnegative");
  }

  if (const YAML::Node nu = root["numerics"]) {
    check_keys(nu, "numerics",
               {"h", "mode_cutoff", "threshold_tol", "points", "eig_tolerance", "unitarity_tolerance", "guard"});
    get(nu, "h", c.h, "numerics.");
    positive(nu, "h", c.h, "numerics.");
    get(nu, "mode_cutoff", c.mode_cutoff, "numerics.");
    get(nu, "threshold_tol", c.threshold_tol, "numerics.");
    if (nu["threshold_tol"]) positive(nu, "threshold_tol", c.threshold_tol, "numerics.");
    get(nu, "points", c.points, "numerics.");
    if (c.points < 3) fail(nu["points"], "field `numerics.points` must be at least 3");
    get(nu, "eig_tolerance", c.eig_tolerance, "numerics.");
    positive(nu, "eig_tolerance", c.eig_tolerance, "numerics.");
    get(nu, "unitarity_tolerance", c.unitarity_tolerance, "numerics.");
    positive(nu, "unitarity_tolerance", c.unitarity_tolerance, "numerics.");
    get(nu, "guard", c.guard, "numerics.");
    positive(nu, "guard", c.guard, "numerics.");
  }

  if (const YAML::Node o = root["output"]) {
    check_keys(o, "output", {"fields", "formats"});
    get(o, "fields", c.write_fields, "output.");
    if (o["formats"]) {
      c.formats = read<std::vector<std::string>>(o["formats"], "output.formats");
      for (const auto& f : c.formats) {
        if (f != "json" && f != "csv") fail(o["formats"], "output format `" + f + "` is not json or csv");
      }
    }
  }

  switch (c.command) {
    case Command::Scatter:
    case Command::Spectrum:
    case Command::Modes:
      if (!c.has_k) throw ConfigError("command `" + to_string(c.command) + "` needs `physics.k`");
      break;
    case Command::Sweep:
    case Command::Trapped:
      if (!c.has_range) throw ConfigError("command `" + to_string(c.command) + "` needs `physics.k_range`");
      break;
    case Command::ModelProblem:
      break;
  }
  if (c.command == Command::Trapped && !(c.beta > 0.0)) {
    throw ConfigError("command `trapped` needs `physics.beta` > 0");
  }
  return c;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

}  // namespace augscat
