#include "sa/schedule.hpp"

#include <cmath>

namespace sa {

namespace {

double horizon_gamma(const HorizonTunedStep& s) {
  if (s.vbar < 0.0) throw InvalidScheduleError("vbar must be >= 0");
  if (s.eta0 < 0.0) throw InvalidScheduleError("eta0 must be >= 0");
  if (!(s.lyap_smoothness > 0.0)) throw InvalidScheduleError("lyap_smoothness must be > 0");
  if (s.horizon < 1) throw InvalidScheduleError("horizon must be >= 1");
  if (s.eta0 == 0.0) {
    if (s.gamma_max.is_unbounded())
      throw InvalidScheduleError("horizon-tuned step is unbounded when eta0 = 0 and gamma_max = inf");
    return s.gamma_max.value() / 2.0;
  }
  const double tuned =
      std::sqrt(2.0 * s.vbar / (s.eta0 * s.lyap_smoothness * static_cast<double>(s.horizon)));
  const double g = s.gamma_max.is_unbounded() ? tuned : std::min(tuned, s.gamma_max.value() / 2.0);
  if (!(g > 0.0)) throw InvalidScheduleError("horizon-tuned step is not positive (vbar = 0?)");
  return g;
}

}  // namespace

double schedule_gamma(const StepSchedule& schedule, std::int64_t k) {
  if (k < 0) throw InvalidScheduleError("iteration index must be >= 0");
  return std::visit(
      [k](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ConstantStep>) {
          if (!(s.gamma > 0.0) || !std::isfinite(s.gamma)) throw InvalidScheduleError("gamma must be > 0");
          return s.gamma;
        } else if constexpr (std::is_same_v<T, HorizonTunedStep>) {
          return horizon_gamma(s);
        } else {
          if (!(s.gamma_tilde > 0.0)) throw InvalidScheduleError("gamma_tilde must be > 0");
          if (s.t0 < 0) throw InvalidScheduleError("t0 must be >= 0");
          if (!(s.beta > 0.0) || s.beta > 1.0) throw InvalidScheduleError("beta must be in (0, 1]");
          return s.gamma_tilde / std::pow(static_cast<double>(k + 1 + s.t0), s.beta);
        }
      },
      schedule);
}

void validate_schedule(const StepSchedule& schedule) { (void)schedule_gamma(schedule, 0); }

bool satisfies_fast_rate_ratio(const StepSchedule& schedule, double rho_minus_b1, std::int64_t horizon) {
  double prev = schedule_gamma(schedule, 0);
  for (std::int64_t k = 1; k < horizon; ++k) {
    const double cur = schedule_gamma(schedule, k);
    if (cur > prev) return false;
    if (prev / cur > 1.0 + cur * rho_minus_b1 / 4.0 + 1e-12) return false;
    prev = cur;
  }
  return true;
}

}  // namespace sa
