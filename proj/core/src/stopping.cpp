#include "sa/stopping.hpp"

#include <numeric>

namespace sa {

std::vector<double> stopping_weights(std::span<const double> gammas, std::span<const double> omegas) {
  if (gammas.size() != omegas.size() || gammas.empty())
    throw DimensionMismatchError("gammas and omegas must be non-empty and equally sized");
  std::vector<double> w(gammas.size());
  double total = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    w[k] = gammas[k] * omegas[k];
    if (!(w[k] > 0.0))
      throw NonPositiveWeightError("gamma_k * omega_k must be > 0 (is some gamma_k >= gamma_max?)");
    total += w[k];
  }
  for (auto& x : w) x /= total;
  return w;
}

ParamVec select_output(const TrajectoryLog& log, const StoppingRule& rule, Rng& rng) {
  if (log.records.empty() && log.iterates.empty() && log.final_w.size() == 0)
    throw MissingIteratesError("empty trajectory log");

  return std::visit(
      [&](const auto& r) -> ParamVec {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, LastIterate>) {
          if (log.final_w.size() == 0) throw MissingIteratesError("log has no final iterate");
          return log.final_w;
        } else if constexpr (std::is_same_v<T, RandomWeighted>) {
          if (log.iterates.empty()) throw MissingIteratesError("random stopping needs stored iterates");
          if (r.weights.size() != log.iterates.size())
            throw DimensionMismatchError("weights/iterates size mismatch");
          const std::size_t idx = rng.categorical(r.weights);
          return log.iterates[idx];
        } else {
          if (log.iterates.empty()) throw MissingIteratesError("averaging needs stored iterates");
          if (r.weights.size() != log.iterates.size())
            throw DimensionMismatchError("weights/iterates size mismatch");
          ParamVec acc = ParamVec::Zero(log.iterates.front().size());
          for (std::size_t k = 0; k < r.weights.size(); ++k) acc += r.weights[k] * log.iterates[k];
          return acc;
        }
      },
      rule);
}

}  // namespace sa
