#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "sa/constants.hpp"
#include "sa/problems/sgd.hpp"
#include "sa/rng.hpp"
#include "sa/types.hpp"

namespace sa {

// Finite family of deterministic Lipschitz maps h_i with mean field
// h = (1/n) sum h_i.
class ComponentField {
 public:
  virtual ~ComponentField() = default;
  virtual std::size_t size() const = 0;
  virtual Eigen::Index dim() const = 0;
  virtual ParamVec component(std::size_t i, const ParamVec& w) const = 0;
  virtual double component_lipschitz(std::size_t i) const = 0;

  ParamVec mean(const ParamVec& w) const;
  // L_bar^2 = (1/n) sum L_i^2.
  double mean_square_lipschitz() const;
};

// h_i = -grad f_i for a finite-sum quadratic.
class QuadraticComponentField final : public ComponentField {
 public:
  explicit QuadraticComponentField(const FiniteSumProblem& problem) : problem_(problem) {}
  std::size_t size() const override { return problem_.size(); }
  Eigen::Index dim() const override { return problem_.dim(); }
  ParamVec component(std::size_t i, const ParamVec& w) const override {
    return -problem_.component_gradient(i, w);
  }
  double component_lipschitz(std::size_t i) const override { return problem_.component_lipschitz(i); }
  const FiniteSumProblem& problem() const { return problem_; }

 private:
  const FiniteSumProblem& problem_;
};

struct SpiderConfig {
  std::int64_t inner_steps = 1;   // k_in
  std::int64_t outer_epochs = 1;  // k_out
  std::int64_t batch = 1;         // b_vr
  bool with_replacement = false;
  double gamma = 0.0;             // constant step within and across epochs
};

struct SpiderRecord {
  std::int64_t epoch = 0;  // t, 1-based as in the loop structure
  std::int64_t inner = 0;  // k, 0-based
  double gamma = 0.0;
  double lyap_w = 0.0;
  double lyap_v = 0.0;
  double normh2 = 0.0;
  double err2 = 0.0;  // ||Hvr_{t,k+1} - h(w_{t,k})||^2
};

struct SpiderLog {
  std::vector<SpiderRecord> records;
  ParamVec final_w;
  std::int64_t component_calls = 0;  // evaluations of some h_i
};

// Validates the step hypothesis (1 v c_h1) gamma lambda(gamma) < rho/2 given
// the constants; throws ConfigViolationError.
void validate_spider_config(const SpiderConfig& config, double rho, double lyap_smoothness,
                            double mean_square_lipschitz, double c_lyap, double c_h1);

// Epoch start resets the estimator to the exact mean field (a drawn batch is
// discarded there, matching the stated procedure's RNG consumption); inner
// steps update it with path-integrated component differences.
SpiderLog run_spider(const ComponentField& field, const SpiderConfig& config, const ParamVec& w_init,
                     std::uint64_t seed, const std::function<double(const ParamVec&)>& lyap_w,
                     const std::function<double(const ParamVec&)>& lyap_v = {},
                     bool record_err = true);

// Closed-form largest admissible constant step: the positive root of
// (1 v c_h1) gamma (L_V + gamma L_bar^2 (c_V^2/rho + rho) k_in / b) = rho/2.
double spider_gamma_max(double rho, double lyap_smoothness, double lipschitz_bar, double c_lyap,
                        double c_h1, std::int64_t inner_steps, std::int64_t batch);

// gamma_T^vr = sqrt(2 Delta1 rho / (T Delta2)) ∧ gamma_max^vr/2, and
// gamma_max^vr/2 when c_h0 = 0.
double spider_step_tuned(double delta1, double delta2, double rho, std::int64_t total_steps,
                         double c_h0, double gamma_max_vr);

struct SpiderBudget {
  std::int64_t inner_steps = 0;
  std::int64_t outer_epochs = 0;
  std::int64_t batch = 0;
  std::int64_t total_calls = 0;
};

// k_in = b = ceil(sqrt(n)); epochs sized for the 1/eps (c_h0 = 0) or 1/eps^2
// regime; call count n k_out + 2 k_out k_in b.
SpiderBudget spider_oracle_budget(std::size_t n, double eps, bool c_h0_zero, double scale = 1.0);

std::int64_t spider_call_count(std::size_t n, std::int64_t outer_epochs, std::int64_t inner_steps,
                               std::int64_t batch);

}  // namespace sa
