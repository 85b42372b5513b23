#pragma once

#include <cstdint>

#include "sa/field.hpp"
#include "sa/schedule.hpp"
#include "sa/trajectory.hpp"

namespace sa {

struct RunOptions {
  bool store_iterates = false;
  std::int64_t replicate = 0;
  // Abort threshold on ||w_k||; projections are out of scope so blow-ups
  // must fail loudly rather than silently wrap.
  double divergence_norm = 1e12;
};

// Runs w_{k+1} = w_k + gamma_{k+1} H(w_k, X_{k+1}) for T steps. Record k holds
// gamma_{k+1} and (W, V, ||h||^2) at w_k. Bit-exact for fixed (seed, schedule,
// field parameters).
TrajectoryLog run_sa(const FieldOracle& field, const StepSchedule& schedule, std::int64_t iterations,
                     const ParamVec& w0, std::uint64_t seed, const RunOptions& options = {});

}  // namespace sa
