#include "sa/sa_run.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>

namespace sa {

std::string TrajectoryLog::serialize() const {
  std::string out;
  out.reserve(records.size() * 96 + 64);
  char buf[160];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%" PRId64 ",%.17g,%.17g,%.17g,%.17g\n", r.k, r.gamma, r.lyap_w,
                  r.lyap_v, r.normh2);
    out += buf;
  }
  for (Eigen::Index i = 0; i < final_w.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g\n", final_w[i]);
    out += buf;
  }
  return out;
}

TrajectoryLog run_sa(const FieldOracle& field, const StepSchedule& schedule, std::int64_t iterations,
                     const ParamVec& w0, std::uint64_t seed, const RunOptions& options) {
  if (iterations < 1) throw SaError("iterations must be >= 1");
  if (w0.size() != field.dim()) throw DimensionMismatchError("w0 dimension does not match the field");
  if (!all_finite(w0)) throw DivergenceError("w0 has non-finite entries");
  validate_schedule(schedule);
  if (auto fixed = field.required_constant_step()) {
    const auto* cs = std::get_if<ConstantStep>(&schedule);
    if (cs == nullptr || cs->gamma != *fixed)
      throw NonconstantStepError("this field is defined for one constant step size");
  }

  Rng rng(seed);
  TrajectoryLog log;
  log.replicate = options.replicate;
  log.records.reserve(static_cast<std::size_t>(iterations));
  if (options.store_iterates) log.iterates.reserve(static_cast<std::size_t>(iterations));

  ParamVec w = w0;
  for (std::int64_t k = 0; k < iterations; ++k) {
    const double gamma = schedule_gamma(schedule, k);
    TrajectoryRecord rec;
    rec.k = k;
    rec.gamma = gamma;
    rec.lyap_w = field.lyapunov_w(w);
    rec.lyap_v = field.lyapunov_v(w);
    rec.normh2 = field.mean_field(w).squaredNorm();
    log.records.push_back(rec);
    if (options.store_iterates) log.iterates.push_back(w);

    w += gamma * field.sample(w, rng);
    if (!all_finite(w) || w.norm() > options.divergence_norm)
      throw DivergenceError("iterate diverged at k = " + std::to_string(k + 1));
  }
  log.final_w = std::move(w);
  return log;
}

}  // namespace sa
