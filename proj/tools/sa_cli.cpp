#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sa/experiment.hpp"

namespace {

std::string read_config_source(const std::string& path) {
  constexpr const char* kPresetPrefix = "preset:";
  if (path.rfind(kPresetPrefix, 0) == 0) return sa::preset_text(path.substr(7));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw sa::SaError("cannot read config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic-approximation experiment runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::int64_t seeds = 0;
  std::int64_t master_seed = -1;

  auto* run = app.add_subcommand("run", "Run an experiment from a config file");
  run->add_option("--config", config_path, "config file (or preset:<name>)")->required();
  run->add_option("--out", out_dir, "output directory")->required();
  run->add_option("--seeds", seeds, "override the number of replications");
  run->add_option("--master-seed", master_seed, "override the master seed");

  auto* check = app.add_subcommand("check", "Parse and validate a config file");
  check->add_option("--config", config_path, "config file (or preset:<name>)")->required();

  auto* presets = app.add_subcommand("presets", "Preset configurations");
  presets->require_subcommand(1);
  presets->add_subcommand("list", "List preset names");
  std::string preset_name;
  auto* show = presets->add_subcommand("show", "Print a preset config");
  show->add_option("name", preset_name, "preset name")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (presets->parsed()) {
      if (show->parsed()) {
        std::cout << sa::preset_text(preset_name);
      } else {
        for (const auto& name : sa::preset_names()) std::cout << name << "\n";
      }
      return 0;
    }

    sa::ExperimentConfig cfg;
    try {
      cfg = sa::parse_config(read_config_source(config_path));
    } catch (const sa::SaError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return 1;
    }

    if (check->parsed()) {
      std::cout << "ok\n";
      return 0;
    }

    if (seeds > 0) cfg.replications = seeds;
    if (master_seed >= 0) cfg.master_seed = static_cast<std::uint64_t>(master_seed);

    const sa::ExperimentSummary summary = sa::run_experiment(cfg, out_dir);
    std::cout << summary.line << "\n";
    return summary.checks_pass ? 0 : 3;
  } catch (const sa::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 2;
  } catch (const sa::ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
