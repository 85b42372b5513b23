#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sa/config.hpp"
#include "sa/diagnostics.hpp"

namespace sa {

struct HorizonResult {
  std::int64_t horizon = 0;
  double stat_mean = 0.0;
  double stat_se = 0.0;
  double bound = std::numeric_limits<double>::quiet_NaN();
  bool bound_checked = false;
  bool bound_pass = true;
};

struct ExperimentSummary {
  std::vector<HorizonResult> horizons;
  std::optional<RateFit> slope;
  bool checks_pass = true;
  std::string line;  // one-line human summary, also written to summary.txt
};

// Runs the configured experiment: per horizon, `seeds` independent
// replications (replicate r uses stream split(master_seed, r), so dispatch
// order is irrelevant), trajectory/aggregate/bound CSVs under
// out_dir/T<horizon>/, and a summary line. Outputs are byte-identical for
// identical (config, master seed).
ExperimentSummary run_experiment(const ExperimentConfig& config, const std::string& out_dir);

std::vector<std::string> preset_names();
std::string preset_text(const std::string& name);

}  // namespace sa
