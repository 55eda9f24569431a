// Scenario runner for the H-formulation superconductor solver.
//
//   htsim run <config.json> [--dry-run] [--output DIR] [--threads N]
//                           [--log-level L]
//
// Exit codes: 0 success, 2 configuration error, 3 solver failure.

#include <CLI11.hpp>
#include <iostream>

#include "htsim/runner.hpp"
#include "htsim/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"transient H-formulation superconductor simulations"};
  app.set_version_flag("--version", htsim::kVersion);

  std::string config_path, output_dir, log_level = "info";
  bool dry_run = false;
  int threads = 0;

  CLI::App* run = app.add_subcommand("run", "run a scenario file");
  run->add_option("config", config_path, "scenario or manifest JSON")
      ->required();
  run->add_flag("--dry-run", dry_run,
                "build the mesh/space and report statistics only");
  run->add_option("--output", output_dir, "override the output directory");
  run->add_option("--threads", threads, "assembly worker count");
  run->add_option("--log-level", log_level, "quiet | info | debug");
  app.require_subcommand(1);

  CLI11_PARSE(app, argc, argv);

  htsim::ScenarioConfig cfg;
  try {
    cfg = htsim::parse_config(config_path);
  } catch (const htsim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  if (!output_dir.empty()) cfg.out_dir = output_dir;
  if (threads > 0) cfg.threads = threads;

  std::ostream& info = std::cout;
  std::ostringstream devnull;
  std::ostream& sink = (log_level == "quiet") ? devnull : info;

  sink << "htsim " << htsim::kVersion << ": " << cfg.name << '\n';
  htsim::RunResult res = htsim::run_scenario(cfg, dry_run, sink);
  if (res.exit_code == 0) sink << res.message << '\n';
  else std::cerr << res.message << '\n';
  return res.exit_code;
}
