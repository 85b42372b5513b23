#pragma once

#include <cstdint>
#include <variant>

#include "sa/types.hpp"

namespace sa {

// Upper step bound that may be unbounded. Kept as an explicit sentinel so no
// float infinity enters arithmetic (0 * inf would poison downstream values).
class MaxStep {
 public:
  static MaxStep unbounded() { return MaxStep(); }
  static MaxStep bounded(double v) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidScheduleError("gamma_max must be positive and finite");
    MaxStep m;
    m.unbounded_ = false;
    m.value_ = v;
    return m;
  }

  bool is_unbounded() const { return unbounded_; }
  double value() const {
    if (unbounded_) throw InvalidScheduleError("gamma_max is unbounded");
    return value_;
  }
  // min(g, gamma_max); an unbounded bound never constrains.
  double min_with(double g) const { return unbounded_ ? g : std::min(g, value_); }
  bool admits(double g) const { return unbounded_ || g < value_; }

 private:
  MaxStep() = default;
  bool unbounded_ = true;
  double value_ = 0.0;
};

struct ConstantStep {
  double gamma;
};

// gamma_T = sqrt(2 vbar / (eta0 * lyap_smoothness * horizon)) ∧ gamma_max/2,
// constant over the run.
struct HorizonTunedStep {
  double vbar;
  double eta0;
  double lyap_smoothness;
  MaxStep gamma_max = MaxStep::unbounded();
  std::int64_t horizon;
};

// gamma_{k+1} = gamma_tilde / (k + 1 + t0)^beta.
struct PolynomialStep {
  double gamma_tilde;
  std::int64_t t0 = 0;
  double beta = 1.0;
};

using StepSchedule = std::variant<ConstantStep, HorizonTunedStep, PolynomialStep>;

// Step applied to move from w_k to w_{k+1}, i.e. gamma_{k+1}; k >= 0.
double schedule_gamma(const StepSchedule& schedule, std::int64_t k);

void validate_schedule(const StepSchedule& schedule);

// Numerical check of the step-ratio condition
//   gamma_k / gamma_{k+1} <= 1 + gamma_{k+1} * (rho - b1) / 4
// required by the fast-rate bound, over the first `horizon` steps.
bool satisfies_fast_rate_ratio(const StepSchedule& schedule, double rho_minus_b1, std::int64_t horizon);

}  // namespace sa
