#include "sa/problems/em.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>

namespace sa {

ParamVec sbar_i(const ExpFamilyModel& model, std::size_t i, const ParamVec& theta) {
  const Eigen::VectorXd post = model.posterior(i, theta);
  ParamVec acc = ParamVec::Zero(model.stat_dim());
  for (Eigen::Index z = 0; z < model.latent_cardinality(); ++z)
    acc += post[z] * model.sufficient_stat(i, z);
  return acc;
}

ParamVec sbar(const ExpFamilyModel& model, const ParamVec& theta) {
  ParamVec acc = ParamVec::Zero(model.stat_dim());
  for (std::size_t i = 0; i < model.data_size(); ++i) acc += sbar_i(model, i, theta);
  return acc / static_cast<double>(model.data_size());
}

ParamVec em_mean_field(const ExpFamilyModel& model, const ParamVec& w) {
  return sbar(model, model.t_map(w)) - w;
}

double em_lyapunov_v(const ExpFamilyModel& model, const ParamVec& w) {
  return model.objective(model.t_map(w));
}

double chi_i(const ExpFamilyModel& model, std::size_t i, const ParamVec& w) {
  const ParamVec theta = model.t_map(w);
  const Eigen::VectorXd post = model.posterior(i, theta);
  const Eigen::VectorXd prop = model.proposal(i, theta);
  double acc = 0.0;
  for (Eigen::Index z = 0; z < post.size(); ++z) acc += post[z] * post[z] / prop[z];
  return acc;
}

double chi_bar(const ExpFamilyModel& model, const ParamVec& w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < model.data_size(); ++i) acc += chi_i(model, i, w);
  return acc / static_cast<double>(model.data_size());
}

double stat_sup_norm(const ExpFamilyModel& model) {
  double s = 0.0;
  for (std::size_t i = 0; i < model.data_size(); ++i)
    for (Eigen::Index z = 0; z < model.latent_cardinality(); ++z)
      s = std::max(s, model.sufficient_stat(i, z).norm());
  return s;
}

ParamVec minibatch_em_field(const ExpFamilyModel& model, const ParamVec& w, std::size_t batch,
                            Rng& rng) {
  const std::size_t n = model.data_size();
  if (batch < 1 || batch > n) throw BatchTooLargeError("need 1 <= batch <= n");
  const ParamVec theta = model.t_map(w);
  const auto idx = rng.sample_without_replacement(n, batch);
  ParamVec acc = ParamVec::Zero(model.stat_dim());
  for (std::size_t i : idx) acc += sbar_i(model, i, theta);
  return acc / static_cast<double>(batch) - w;
}

ParamVec saem_field_exact(const ExpFamilyModel& model, const ParamVec& w, std::size_t mc_samples,
                          Rng& rng) {
  if (mc_samples < 1) throw SaError("mc_samples must be >= 1");
  const ParamVec theta = model.t_map(w);
  ParamVec acc = ParamVec::Zero(model.stat_dim());
  for (std::size_t i = 0; i < model.data_size(); ++i) {
    const Eigen::VectorXd post = model.posterior(i, theta);
    const std::span<const double> probs(post.data(), static_cast<std::size_t>(post.size()));
    for (std::size_t j = 0; j < mc_samples; ++j) {
      const auto z = static_cast<Eigen::Index>(rng.categorical(probs));
      acc += model.sufficient_stat(i, z);
    }
  }
  return acc / static_cast<double>(model.data_size() * mc_samples) - w;
}

ParamVec saem_field_is(const ExpFamilyModel& model, const ParamVec& w, std::size_t mc_samples,
                       Rng& rng) {
  if (mc_samples < 1) throw SaError("mc_samples must be >= 1");
  const ParamVec theta = model.t_map(w);
  ParamVec acc = ParamVec::Zero(model.stat_dim());
  std::vector<Eigen::Index> draws(mc_samples);
  std::vector<double> logw(mc_samples);
  for (std::size_t i = 0; i < model.data_size(); ++i) {
    const Eigen::VectorXd prop = model.proposal(i, theta);
    const std::span<const double> probs(prop.data(), static_cast<std::size_t>(prop.size()));
    double logw_max = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < mc_samples; ++j) {
      const auto z = static_cast<Eigen::Index>(rng.categorical(probs));
      draws[j] = z;
      logw[j] = model.log_unnormalized_joint(i, z, theta) - std::log(prop[z]);
      logw_max = std::max(logw_max, logw[j]);
    }
    if (!std::isfinite(logw_max)) throw ZeroWeightSumError("all importance weights vanished");
    double total = 0.0;
    for (std::size_t j = 0; j < mc_samples; ++j) {
      logw[j] = std::exp(logw[j] - logw_max);
      total += logw[j];
    }
    for (std::size_t j = 0; j < mc_samples; ++j)
      acc += (logw[j] / total) * model.sufficient_stat(i, draws[j]);
  }
  return acc / static_cast<double>(model.data_size()) - w;
}

ParamVec em_step_theta(const ExpFamilyModel& model, const ParamVec& theta) {
  return model.t_map(sbar(model, theta));
}

ParamVec em_fixed_point(const ExpFamilyModel& model, const ParamVec& theta0, double tol, int max_iter) {
  ParamVec theta = theta0;
  for (int it = 0; it < max_iter; ++it) {
    ParamVec next = em_step_theta(model, theta);
    const double delta = (next - theta).norm();
    theta = std::move(next);
    if (delta <= tol * (1.0 + theta.norm())) return theta;
  }
  throw SaError("EM fixed-point iteration did not converge");
}

GmmModel::GmmModel(ParamVec observations, ParamVec weights)
    : y_(std::move(observations)), weights_(std::move(weights)) {
  if (y_.size() < 1) throw EmptyProblemError("need observations");
  if (weights_.size() < 1) throw EmptyProblemError("need at least one component");
  if (std::abs(weights_.sum() - 1.0) > 1e-12 || weights_.minCoeff() <= 0.0)
    throw SaError("weights must be positive and sum to 1");
  log_weights_ = weights_.array().log();
}

GmmModel GmmModel::generate(std::size_t n, const ParamVec& true_means, const ParamVec& weights,
                            std::uint64_t seed) {
  if (true_means.size() != weights.size()) throw DimensionMismatchError("means/weights size mismatch");
  Rng rng(seed);
  ParamVec y(static_cast<Eigen::Index>(n));
  const std::span<const double> probs(weights.data(), static_cast<std::size_t>(weights.size()));
  for (std::size_t i = 0; i < n; ++i) {
    const auto z = static_cast<Eigen::Index>(rng.categorical(probs));
    y[static_cast<Eigen::Index>(i)] = true_means[z] + rng.normal();
  }
  return GmmModel(std::move(y), weights);
}

ParamVec GmmModel::sufficient_stat(std::size_t i, Eigen::Index z) const {
  const Eigen::Index k = latent_cardinality();
  ParamVec s = ParamVec::Zero(2 * k);
  s[z] = 1.0;
  s[k + z] = y_[static_cast<Eigen::Index>(i)];
  return s;
}

Eigen::VectorXd GmmModel::posterior(std::size_t i, const ParamVec& theta) const {
  if (!all_finite(theta)) throw DegeneratePosteriorError("theta has non-finite entries");
  const Eigen::Index k = latent_cardinality();
  const double yi = y_[static_cast<Eigen::Index>(i)];
  Eigen::VectorXd logits(k);
  for (Eigen::Index z = 0; z < k; ++z) {
    const double r = yi - theta[z];
    logits[z] = log_weights_[z] - 0.5 * r * r;
  }
  const double m = logits.maxCoeff();
  Eigen::VectorXd post = (logits.array() - m).exp();
  return post / post.sum();
}

Eigen::VectorXd GmmModel::proposal(std::size_t, const ParamVec&) const { return weights_; }

double GmmModel::log_unnormalized_joint(std::size_t i, Eigen::Index z, const ParamVec& theta) const {
  const double r = y_[static_cast<Eigen::Index>(i)] - theta[z];
  return log_weights_[z] - 0.5 * r * r;
}

ParamVec GmmModel::natural_parameter(const ParamVec& theta) const {
  const Eigen::Index k = latent_cardinality();
  ParamVec phi(2 * k);
  for (Eigen::Index z = 0; z < k; ++z) {
    phi[z] = log_weights_[z] - 0.5 * theta[z] * theta[z];
    phi[k + z] = theta[z];
  }
  return phi;
}

ParamVec GmmModel::t_map(const ParamVec& s) const {
  const Eigen::Index k = latent_cardinality();
  if (s.size() != 2 * k) throw DimensionMismatchError("statistic dimension mismatch");
  if (!all_finite(s)) throw DegeneratePosteriorError("statistic has non-finite entries");
  ParamVec theta(k);
  for (Eigen::Index z = 0; z < k; ++z) {
    if (!(s[z] > 0.0)) throw DegeneratePosteriorError("component mass must be positive in the M-step");
    theta[z] = s[k + z] / s[z];
  }
  return theta;
}

double GmmModel::objective(const ParamVec& theta) const {
  const Eigen::Index k = latent_cardinality();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < y_.size(); ++i) {
    Eigen::VectorXd logits(k);
    for (Eigen::Index z = 0; z < k; ++z) {
      const double r = y_[i] - theta[z];
      logits[z] = log_weights_[z] - 0.5 * r * r;
    }
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    acc += lse - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  return -acc / static_cast<double>(y_.size());
}

ParamVec GmmModel::grad_objective(const ParamVec& theta) const {
  // dF/dtheta_z = -(1/n) sum_i pi_i(z; theta) (y_i - theta_z)
  const Eigen::Index k = latent_cardinality();
  ParamVec g = ParamVec::Zero(k);
  for (std::size_t i = 0; i < data_size(); ++i) {
    const Eigen::VectorXd post = posterior(i, theta);
    for (Eigen::Index z = 0; z < k; ++z)
      g[z] -= post[z] * (y_[static_cast<Eigen::Index>(i)] - theta[z]);
  }
  return g / static_cast<double>(data_size());
}

ParamVec GmmModel::grad_v(const ParamVec& w) const {
  const Eigen::Index k = latent_cardinality();
  const ParamVec theta = t_map(w);
  const ParamVec g = grad_objective(theta);
  ParamVec out = ParamVec::Zero(2 * k);
  for (Eigen::Index z = 0; z < k; ++z) {
    out[z] = -w[k + z] / (w[z] * w[z]) * g[z];
    out[k + z] = g[z] / w[z];
  }
  return out;
}

Matrix GmmModel::b_matrix(const ParamVec& w) const {
  const Eigen::Index k = latent_cardinality();
  (void)t_map(w);  // validates positive masses
  Matrix b = Matrix::Zero(2 * k, 2 * k);
  for (Eigen::Index z = 0; z < k; ++z) {
    // grad T row z touches only (w1_z, w2_z); D02 L = diag(w1).
    const double t1 = -w[k + z] / (w[z] * w[z]);
    const double t2 = 1.0 / w[z];
    b(z, z) = w[z] * t1 * t1;
    b(z, k + z) = w[z] * t1 * t2;
    b(k + z, z) = b(z, k + z);
    b(k + z, k + z) = w[z] * t2 * t2;
  }
  return b;
}

ParamVec em_default_start(const ExpFamilyModel& model) {
  const auto& gmm = dynamic_cast<const GmmModel&>(model);
  const Eigen::Index k = model.latent_cardinality();
  ParamVec theta(k);
  const double lo = gmm.observations().minCoeff();
  const double hi = gmm.observations().maxCoeff();
  for (Eigen::Index z = 0; z < k; ++z)
    theta[z] = lo + (hi - lo) * (static_cast<double>(z) + 0.5) / static_cast<double>(k);
  return theta;
}

std::vector<ParamVec> em_probe_points(const GmmModel& model, const ParamVec& theta0, int count,
                                      std::uint64_t seed) {
  Rng rng(seed);
  const Eigen::Index k = model.latent_cardinality();
  const double mass_floor = 0.1 * model.weights().minCoeff();
  std::vector<ParamVec> probes;
  probes.reserve(static_cast<std::size_t>(count));
  ParamVec w = sbar(model, theta0);
  while (static_cast<int>(probes.size()) < count) {
    for (int variant = 0; variant < 4 && static_cast<int>(probes.size()) < count; ++variant) {
      ParamVec probe = w;
      if (variant > 0) {
        double mass = 0.0;
        for (Eigen::Index z = 0; z < k; ++z) {
          probe[z] *= 1.0 + 0.15 * rng.normal();
          probe[z] = std::max(probe[z], mass_floor);
          mass += probe[z];
        }
        for (Eigen::Index z = 0; z < k; ++z) {
          probe[z] /= mass;
          probe[k + z] *= 1.0 + 0.15 * rng.normal();
          probe[k + z] += 0.05 * rng.normal();
        }
      }
      probes.push_back(probe);
    }
    w = sbar(model, model.t_map(w));
  }
  return probes;
}

EmConstants estimate_em_constants(const GmmModel& model, std::uint64_t seed, int probe_points) {
  const std::vector<ParamVec> probes =
      em_probe_points(model, em_default_start(model), probe_points, seed);

  EmConstants c;
  c.n = model.data_size();
  c.s_star = stat_sup_norm(model);
  c.sigma_bar2_0 = c.s_star * c.s_star;
  c.sigma_bar2_1 = 0.0;

  double v_min = std::numeric_limits<double>::infinity();
  double v_max = 0.0;
  double chi_max = 0.0;
  for (const auto& w : probes) {
    const Matrix b = model.b_matrix(w);
    const ParamVec h = em_mean_field(model, w);
    const double h2 = h.squaredNorm();
    if (h2 > 1e-16) v_min = std::min(v_min, h.dot(b * h) / h2);
    Eigen::SelfAdjointEigenSolver<Matrix> es(b, Eigen::EigenvaluesOnly);
    v_max = std::max(v_max, es.eigenvalues().maxCoeff());
    chi_max = std::max(chi_max, chi_bar(model, w));
  }
  c.v_min = v_min;
  c.v_max = v_max;
  c.c_chi_0 = chi_max * chi_max;
  c.c_chi_1 = 0.0;

  double lv = 0.0;
  for (std::size_t a = 0; a + 1 < probes.size(); ++a) {
    const ParamVec& w1 = probes[a];
    const ParamVec& w2 = probes[a + 1];
    const double dist = (w1 - w2).norm();
    if (dist > 1e-10)
      lv = std::max(lv, (model.grad_v(w1) - model.grad_v(w2)).norm() / dist);
  }
  c.lyap_smoothness = lv;
  return c;
}

RegimeConstants em_regime_constants(const EmConstants& c, EmAlgo algo, std::size_t batch_or_m,
                                    double v_star) {
  RegimeConstants rc;
  rc.c_h0 = 0.0;
  rc.c_h1 = 1.0;
  rc.lyap_smoothness = c.lyap_smoothness;
  rc.rho = c.v_min;
  rc.c_lyap = c.v_max;
  rc.v_star = v_star;
  const double nm = static_cast<double>(c.n) * static_cast<double>(batch_or_m);
  const double m = static_cast<double>(batch_or_m);
  switch (algo) {
    case EmAlgo::minibatch:
      rc.sigma2_0 = c.sigma_bar2_0 / m;
      rc.sigma2_1 = c.sigma_bar2_1 / m;
      break;
    case EmAlgo::saem_es:
      rc.sigma2_0 = c.sigma_bar2_0 / nm;
      rc.sigma2_1 = c.sigma_bar2_1 / nm;
      break;
    case EmAlgo::saem_is:
      rc.tau0 = 144.0 * c.s_star * c.s_star * c.c_chi_0 / (m * m);
      rc.tau1 = 144.0 * c.s_star * c.s_star * c.c_chi_1 / (m * m);
      rc.sigma2_0 = 4.0 * c.s_star * c.s_star * std::sqrt(c.c_chi_0 + c.c_chi_1) / nm;
      rc.sigma2_1 = 4.0 * c.s_star * c.s_star * std::sqrt(c.c_chi_1) / nm;
      break;
  }
  return rc;
}

EmBudget em_cost_budget(const EmConstants& c, EmAlgo algo, double eps, const EmUnitCosts& costs,
                        double vbar) {
  if (!(eps > 0.0)) throw EpsilonOutOfRangeError("eps must be > 0");
  if (c.sigma_bar2_1 > 0.0 && eps >= 2.0 * c.sigma_bar2_0 / c.sigma_bar2_1)
    throw EpsilonOutOfRangeError("eps must lie in (0, 2*sigma_bar2_0/sigma_bar2_1)");
  const double v = c.v_min;
  const double lv = c.lyap_smoothness;
  const double s0 = c.sigma_bar2_0;
  const double s1 = c.sigma_bar2_1;
  const double n = static_cast<double>(c.n);
  EmBudget out;

  auto finish = [&](double chosen, double hp_threshold_den, double t_hp, double t_lp, double g_hp,
                    double g_lp, double per_iter_cost) {
    const bool high = eps <= 2.0 * s0 / hp_threshold_den;
    out.regime = high ? PrecisionRegime::high : PrecisionRegime::low;
    out.iterations = static_cast<std::int64_t>(std::ceil(std::max(1.0, high ? t_hp : t_lp)));
    out.gamma = high ? g_hp : g_lp;
    out.total_cost = static_cast<double>(out.iterations) * per_iter_cost;
    (void)chosen;
  };

  switch (algo) {
    case EmAlgo::minibatch: {
      const double b_star = costs.cost_sbar > 0.0 ? std::sqrt(s1 * costs.cost_t / costs.cost_sbar) : 0.0;
      const double b_hp_max = 2.0 * s0 / eps - s1;
      double b_opt;
      if (costs.cost_t == 0.0)
        b_opt = 1.0;  // HP cost is flat in b, smallest batch wins
      else if (b_star <= b_hp_max)
        b_opt = std::floor(b_hp_max);  // stay inside the high-precision range
      else
        b_opt = std::round(b_star);
      const double b = std::clamp(b_opt, 1.0, n);
      out.batch_or_m = static_cast<std::size_t>(b);
      finish(b, b + s1, 8.0 * vbar * lv * s0 / (v * v * b * eps * eps),
             4.0 * vbar * lv * (1.0 + s1 / b) / (v * v * eps), v * b * eps / (2.0 * s0 * lv),
             v * b / (lv * (b + s1)), b * costs.cost_sbar + costs.cost_t);
      break;
    }
    case EmAlgo::saem_es: {
      const double m_star = costs.cost_mc > 0.0 ? std::sqrt(s1 * costs.cost_t / costs.cost_mc) / n : 0.0;
      const double m_hp_max = (2.0 * s0 / eps - s1) / n;
      double m_opt;
      if (costs.cost_t == 0.0)
        m_opt = 1.0;
      else if (m_star <= m_hp_max)
        m_opt = std::floor(m_hp_max);
      else
        m_opt = std::round(m_star);
      const double m = std::max(1.0, m_opt);
      out.batch_or_m = static_cast<std::size_t>(m);
      finish(m, n * m + s1, 8.0 * vbar * lv * s0 / (v * v * n * m * eps * eps),
             4.0 * vbar * lv * (1.0 + s1 / (n * m)) / (v * v * eps),
             v * n * m * eps / (2.0 * s0 * lv), v * n * m / (lv * (n * m + s1)),
             costs.cost_t + n * m * costs.cost_mc);
      break;
    }
    case EmAlgo::saem_is: {
      const double kappa = 0.5;
      const double c_b = 6.0 * c.s_star * c.v_max * std::sqrt(c.c_chi_0);
      if (4.0 * c_b / ((1.0 - kappa) * v) + eps * s1 > 2.0 * s0 / kappa)
        throw HypothesisViolatedError("kappa = 1/2 inadmissible: bias floor too large for this eps");
      const double m_bias = 4.0 * c_b / ((1.0 - kappa) * v * eps);
      const double m_hp_max = 2.0 * s0 / (kappa * eps) - s1;
      const double m_star = costs.cost_mc > 0.0 ? std::sqrt(s1 * costs.cost_t / (n * costs.cost_mc)) : 0.0;
      double m_opt;
      if (costs.cost_t == 0.0)
        m_opt = std::ceil(m_bias);
      else if (m_star <= m_hp_max)
        m_opt = std::floor(m_hp_max);
      else
        m_opt = std::max(std::round(m_star), std::ceil(m_bias));
      const double m = std::max(1.0, m_opt);
      out.batch_or_m = static_cast<std::size_t>(m);
      finish(m, (kappa * (m + s1)) > 0 ? kappa * (m + s1) : 1.0,
             32.0 * vbar * lv * s0 / (v * v * m * kappa * kappa * eps * eps),
             16.0 * vbar * lv * (1.0 + s1 / m) / (v * v * kappa * eps),
             kappa * eps * v * m / (4.0 * lv * s0), v / (2.0 * lv * (1.0 + s1 / m)),
             costs.cost_t + n * m * costs.cost_mc);
      break;
    }
  }
  return out;
}

EmFieldOracle::EmFieldOracle(const ExpFamilyModel& model, Kind kind, std::size_t batch_or_m)
    : model_(model), kind_(kind), batch_or_m_(batch_or_m) {
  if (kind_ != Kind::full && batch_or_m_ < 1) throw SaError("batch/m must be >= 1");
}

ParamVec EmFieldOracle::sample(const ParamVec& w, Rng& rng) const {
  switch (kind_) {
    case Kind::full:
      return em_mean_field(model_, w);
    case Kind::minibatch:
      return minibatch_em_field(model_, w, batch_or_m_, rng);
    case Kind::saem_exact:
      return saem_field_exact(model_, w, batch_or_m_, rng);
    case Kind::saem_is:
      return saem_field_is(model_, w, batch_or_m_, rng);
  }
  throw SaError("unreachable");
}

EmAlgo em_algo_from_string(const std::string& name) {
  if (name == "minibatch") return EmAlgo::minibatch;
  if (name == "saem_es") return EmAlgo::saem_es;
  if (name == "saem_is") return EmAlgo::saem_is;
  throw SaError("unknown em algo: " + name);
}

}  // namespace sa
