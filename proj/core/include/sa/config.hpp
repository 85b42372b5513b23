#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sa/types.hpp"

namespace sa {

// Line-oriented "key = value" configuration with [section] headers, '#'
// comments and comma-separated lists; no nesting. Unknown keys are hard
// errors. Matrices use ';'-separated rows inside one value.
struct ExperimentConfig {
  // [problem]
  std::string problem_type;  // sgd | em | td | spider
  std::int64_t n = 0;
  std::int64_t d = 0;
  std::uint64_t instance_seed = 1;
  std::string sgd_regime = "nonconvex";
  double td_lambda = 0.5;
  std::string td_features = "random";  // random | tabular
  std::optional<Matrix> td_p;
  std::optional<Matrix> td_r;
  std::optional<Matrix> td_phi;
  std::int64_t em_components = 2;
  std::vector<double> em_true_means;
  std::vector<double> em_weights;
  std::optional<std::vector<double>> em_data;
  std::string em_oracle = "minibatch";

  // [algorithm]
  std::vector<std::int64_t> horizons;
  // constant | horizon | poly | sqrt_t | poly_tuned | td_horizon | td_poly |
  // half_gamma_max
  std::string schedule = "constant";
  double gamma = 0.0;
  double gamma_tilde = 0.0;
  std::int64_t t0 = 0;
  double beta = 1.0;
  std::int64_t batch = 1;
  std::int64_t mc_samples = 1;
  std::string stopping = "last";  // last | random | average
  std::int64_t replications = 1;
  std::uint64_t master_seed = 0;
  std::string compressor;             // empty = none
  std::string placement = "field";    // field | perturbed | lowprec
  std::int64_t spider_k_in = 0;       // 0 = ceil(sqrt(n))
  std::int64_t spider_b = 0;          // 0 = ceil(sqrt(n))
  std::string spider_step = "tuned";  // "tuned" or a number

  // [output]
  std::int64_t log_stride = 1;
  bool write_trajectories = true;
  std::string bound = "none";  // none | running_avg | tuned_step | poly_last |
                               // td_robust | td_fast | vr_tuned | lowprec
  std::string statistic = "mean_w";  // mean_w | last_w | avg_iterate_w | last_v2

  // [checks]
  bool check_bound = false;
  std::optional<double> slope_min;
  std::optional<double> slope_max;
  std::optional<double> final_max;  // cap on the final-horizon statistic
};

ExperimentConfig parse_config(const std::string& text);
std::string serialize_config(const ExperimentConfig& config);
bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace sa
