#include "sa/spider.hpp"

#include <cmath>

namespace sa {

ParamVec ComponentField::mean(const ParamVec& w) const {
  ParamVec acc = ParamVec::Zero(dim());
  for (std::size_t i = 0; i < size(); ++i) acc += component(i, w);
  return acc / static_cast<double>(size());
}

double ComponentField::mean_square_lipschitz() const {
  double acc = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    const double l = component_lipschitz(i);
    acc += l * l;
  }
  return acc / static_cast<double>(size());
}

void validate_spider_config(const SpiderConfig& config, double rho, double lyap_smoothness,
                            double mean_square_lipschitz, double c_lyap, double c_h1) {
  if (config.inner_steps < 1 || config.outer_epochs < 1 || config.batch < 1)
    throw ConfigViolationError("k_in, k_out, b_vr must be >= 1");
  if (!(config.gamma > 0.0)) throw ConfigViolationError("gamma must be > 0");
  const double lambda =
      lyap_smoothness + config.gamma * mean_square_lipschitz * (c_lyap * c_lyap / rho + rho) *
                            static_cast<double>(config.inner_steps) / static_cast<double>(config.batch);
  if (std::max(1.0, c_h1) * config.gamma * lambda >= rho / 2.0)
    throw ConfigViolationError("step hypothesis violated: (1 v c_h1) gamma lambda >= rho/2");
}

SpiderLog run_spider(const ComponentField& field, const SpiderConfig& config, const ParamVec& w_init,
                     std::uint64_t seed, const std::function<double(const ParamVec&)>& lyap_w,
                     const std::function<double(const ParamVec&)>& lyap_v, bool record_err) {
  if (w_init.size() != field.dim()) throw DimensionMismatchError("w_init dimension mismatch");
  if (config.inner_steps < 1 || config.outer_epochs < 1) throw ConfigViolationError("k_in, k_out >= 1");
  if (config.batch < 1 || config.batch > static_cast<std::int64_t>(field.size()))
    throw ConfigViolationError("need 1 <= b_vr <= n");

  Rng rng(seed);
  const auto n = field.size();
  const auto b = static_cast<std::size_t>(config.batch);
  SpiderLog log;
  log.records.reserve(static_cast<std::size_t>(config.inner_steps * config.outer_epochs));

  ParamVec w = w_init;
  for (std::int64_t t = 1; t <= config.outer_epochs; ++t) {
    ParamVec w_prev = w;  // w_{t,-1} = w_{t,0}
    // The drawn-but-unused epoch batch keeps the RNG stream aligned with the
    // literal procedure.
    (void)(config.with_replacement ? rng.sample_with_replacement(n, b)
                                   : rng.sample_without_replacement(n, b));
    ParamVec estimator = field.mean(w);
    log.component_calls += static_cast<std::int64_t>(n);

    for (std::int64_t k = 0; k < config.inner_steps; ++k) {
      const auto batch_idx = config.with_replacement ? rng.sample_with_replacement(n, b)
                                                     : rng.sample_without_replacement(n, b);
      ParamVec correction = ParamVec::Zero(field.dim());
      for (std::size_t i : batch_idx) correction += field.component(i, w) - field.component(i, w_prev);
      log.component_calls += 2 * static_cast<std::int64_t>(b);
      estimator += correction / static_cast<double>(b);

      SpiderRecord rec;
      rec.epoch = t;
      rec.inner = k;
      rec.gamma = config.gamma;
      rec.lyap_w = lyap_w(w);
      if (lyap_v) rec.lyap_v = lyap_v(w);
      if (record_err) {
        const ParamVec h = field.mean(w);
        rec.normh2 = h.squaredNorm();
        rec.err2 = (estimator - h).squaredNorm();
      }
      log.records.push_back(rec);

      w_prev = w;
      w += config.gamma * estimator;
      if (!all_finite(w) || w.norm() > 1e12)
        throw DivergenceError("SPIDER iterate diverged at epoch " + std::to_string(t));
    }
  }
  log.final_w = std::move(w);
  return log;
}

double spider_gamma_max(double rho, double lyap_smoothness, double lipschitz_bar, double c_lyap,
                        double c_h1, std::int64_t inner_steps, std::int64_t batch) {
  if (!(rho > 0.0) || !(lyap_smoothness > 0.0)) throw SaError("need rho > 0 and L_V > 0");
  const double cmax = std::max(1.0, c_h1);
  const double l2 = lipschitz_bar * lipschitz_bar;
  if (l2 == 0.0) return rho / (2.0 * lyap_smoothness * cmax);
  const double ratio = static_cast<double>(inner_steps) / static_cast<double>(batch);
  const double lead = rho * lyap_smoothness * static_cast<double>(batch) /
                      (2.0 * l2 * (c_lyap * c_lyap + rho * rho) * static_cast<double>(inner_steps));
  const double inside = 1.0 + 2.0 * l2 * (c_lyap * c_lyap + rho * rho) * ratio /
                                  (lyap_smoothness * lyap_smoothness * cmax);
  return lead * (std::sqrt(inside) - 1.0);
}

double spider_step_tuned(double delta1, double delta2, double rho, std::int64_t total_steps,
                         double c_h0, double gamma_max_vr) {
  if (c_h0 == 0.0) return gamma_max_vr / 2.0;
  if (!(delta2 > 0.0) || total_steps < 1) throw SaError("need delta2 > 0 and T >= 1");
  return std::min(std::sqrt(2.0 * delta1 * rho / (static_cast<double>(total_steps) * delta2)),
                  gamma_max_vr / 2.0);
}

std::int64_t spider_call_count(std::size_t n, std::int64_t outer_epochs, std::int64_t inner_steps,
                               std::int64_t batch) {
  return static_cast<std::int64_t>(n) * outer_epochs + 2 * outer_epochs * inner_steps * batch;
}

SpiderBudget spider_oracle_budget(std::size_t n, double eps, bool c_h0_zero, double scale) {
  if (!(eps > 0.0)) throw EpsilonOutOfRangeError("eps must be > 0");
  SpiderBudget out;
  const double root_n = std::sqrt(static_cast<double>(n));
  out.inner_steps = static_cast<std::int64_t>(std::ceil(root_n));
  out.batch = out.inner_steps;
  const double total = c_h0_zero ? scale / (root_n * eps) : scale / (eps * eps);
  out.outer_epochs = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(
                                                   c_h0_zero ? total
                                                             : total / static_cast<double>(out.inner_steps))));
  out.total_calls = spider_call_count(n, out.outer_epochs, out.inner_steps, out.batch);
  return out;
}

}  // namespace sa
