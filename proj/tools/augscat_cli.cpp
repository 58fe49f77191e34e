#include <CLI11.hpp>
#include <iostream>

#include "augscat/config.hpp"
#include "augscat/error.hpp"
#include "augscat/run.hpp"

namespace {

void summarize(const augscat::RunManifest& m) {
  for (const auto& s : m.stages) {
    std::cout << s.stage << ": " << s.status;
    if (!s.error.empty()) std::cout << " (" << s.error << ")";
    std::cout << '\n';
    for (const auto& w : s.warnings) std::cout << "  warning: " << w << '\n';
  }
  std::cout << "outputs: " << m.outputs.size() << " files, exit code " << m.exit_code << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scattering matrices, trapped modes and wave bases for planar waveguide junctions"};
  app.set_version_flag("--version", augscat::kToolVersion);

  std::string config_path, out_dir = "out";
  int threads = 1;
  std::uint64_t seed = 1;
  bool strict = false;
  app.add_option("command", "Command to check against the config (spectrum, modes, scatter, sweep, trapped, model-problem, selfcheck)");
  app.add_option("--config", config_path, "YAML run configuration");
  app.add_option("--out", out_dir, "Output directory")->capture_default_str();
  app.add_option("--threads", threads, "Worker threads for sweeps")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--seed", seed, "Seed for the randomized selfcheck")->capture_default_str();
  app.add_flag("--strict", strict, "Treat warnings as errors");
  CLI11_PARSE(app, argc, argv);

  std::string command;
  if (auto* opt = app.get_option("command"); opt->count() > 0) command = opt->as<std::string>();

  augscat::RunOptions ro;
  ro.out_dir = out_dir;
  ro.threads = threads;
  ro.strict = strict;
  try {
    if (command == "selfcheck") {
      const auto m = augscat::selfcheck(seed, ro);
      summarize(m);
      return m.exit_code;
    }
    if (config_path.empty()) {
      std::cerr << "error: --config is required (except for selfcheck)\n";
      return 2;
    }
    const augscat::RunConfig cfg = augscat::parse_config_file(config_path);
    if (!command.empty() && command != augscat::to_string(cfg.command)) {
      std::cerr << "error: command `" << command << "` does not match the config command `"
                << augscat::to_string(cfg.command) << "`\n";
      return 2;
    }
    const auto m = augscat::run(cfg, ro);
    summarize(m);
    return m.exit_code;
  } catch (const augscat::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
