#pragma once

#include <span>
#include <variant>
#include <vector>

#include "sa/rng.hpp"
#include "sa/trajectory.hpp"
#include "sa/types.hpp"

namespace sa {

struct LastIterate {};

// Output w_{R} with P(R = k) proportional to weights[k] over stored iterates.
struct RandomWeighted {
  std::vector<double> weights;
};

// Output the convex combination sum_k weights[k] * w_k.
struct WeightedAverage {
  std::vector<double> weights;
};

using StoppingRule = std::variant<LastIterate, RandomWeighted, WeightedAverage>;

// Normalized pmf proportional to gammas[k] * omegas[k]; throws
// NonPositiveWeightError unless every product is positive.
std::vector<double> stopping_weights(std::span<const double> gammas, std::span<const double> omegas);

ParamVec select_output(const TrajectoryLog& log, const StoppingRule& rule, Rng& rng);

}  // namespace sa
