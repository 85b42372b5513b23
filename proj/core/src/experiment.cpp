#include "sa/experiment.hpp"

#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "sa/compression.hpp"
#include "sa/problems/em.hpp"
#include "sa/problems/sgd.hpp"
#include "sa/problems/td.hpp"
#include "sa/sa_run.hpp"
#include "sa/spider.hpp"
#include "sa/stopping.hpp"

namespace sa {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::int64_t effective_stride(std::int64_t cfg_stride, std::int64_t horizon) {
  if (cfg_stride > 0) return cfg_stride;
  return std::max<std::int64_t>(1, horizon / 256);
}

std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

struct StridedRow {
  std::int64_t k = 0;
  double gamma = 0.0, w = 0.0, v = 0.0, normh2 = 0.0;
};

struct ReplicateOut {
  double stat = 0.0;
  std::vector<StridedRow> rows;
  std::vector<double> running;  // weighted running mean of W at the row ks
};

// Everything instance-level, built once per experiment.
struct BuiltProblem {
  std::unique_ptr<FiniteSumProblem> sgd_problem;
  std::unique_ptr<SgdFieldOracle> sgd_oracle;

  std::unique_ptr<Mrp> mrp;
  std::unique_ptr<TdFeatures> td_features;
  std::unique_ptr<TdFieldOracle> td_oracle;

  std::unique_ptr<GmmModel> gmm;
  std::unique_ptr<EmFieldOracle> em_oracle;
  EmConstants em_constants;

  std::unique_ptr<QuadraticComponentField> spider_field;
  std::int64_t spider_k_in = 0;
  std::int64_t spider_b = 0;
  double spider_gamma = 0.0;      // resolved constant step
  double spider_gamma_max_vr = 0.0;
  double spider_delta1 = 0.0;
  double spider_delta2 = 0.0;

  const FieldOracle* base = nullptr;  // SA problems only
  std::unique_ptr<FieldOracle> wrapper;  // T-independent compression wrapper
  ParamVec w0;
  RegimeConstants rc;
  // Absent when the certified bias violates b1 < rho (possible for the
  // importance-sampled EM oracle at desk-scale m); such runs still execute,
  // they just cannot use derived-constant schedules or bounds.
  std::optional<DerivedConstants> dc;
  const DerivedConstants& derived() const {
    if (!dc) throw ConfigViolationError("this oracle's certified bias violates b1 < rho; derived-constant schedules and bounds are unavailable");
    return *dc;
  }

  // TD extras for the corollary bounds/schedules
  double td_vstar2 = 0.0;  // ||V*||^2_{D_pi} (true value function)
  double td_vmin = 0.0;
  double td_w0_w = 0.0;    // W(w0) in the D_pi norm
  ParamVec td_wstar;
};

double resolve_poly_tuned_gamma_tilde(const ExperimentConfig& cfg, const BuiltProblem& p) {
  return cfg.gamma_tilde > 0.0 ? cfg.gamma_tilde : 6.0 / (p.rc.rho - p.derived().b1);
}

std::int64_t resolve_poly_tuned_t0(const ExperimentConfig& cfg, const BuiltProblem& p, double gamma_tilde) {
  if (cfg.t0 > 0) return cfg.t0;
  return static_cast<std::int64_t>(std::ceil(2.0 * gamma_tilde / p.derived().gamma_max.value()));
}

double resolve_td_poly_gamma_tilde(const ExperimentConfig& cfg, const BuiltProblem& p) {
  if (cfg.gamma_tilde > 0.0) return cfg.gamma_tilde;
  // smallest admissible scale (strict inequality) minimizes the noise term
  const double lam = cfg.td_lambda;
  return 1.05 * 3.0 / (std::sqrt(p.td_vmin) * (1.0 - lam));
}

std::int64_t resolve_td_poly_t0(const ExperimentConfig& cfg, const BuiltProblem& p, double gamma_tilde) {
  if (cfg.t0 > 0) return cfg.t0;
  const double lam = cfg.td_lambda;
  return static_cast<std::int64_t>(
      std::ceil(2.0 * gamma_tilde * (1.0 + lam) * (1.0 + lam) / (std::sqrt(p.td_vmin) * (1.0 - lam))));
}

BuiltProblem build_problem(const ExperimentConfig& cfg) {
  BuiltProblem p;
  if (cfg.problem_type == "sgd") {
    if (cfg.d < 1) throw ParseError(0, "sgd needs d >= 1");
    p.sgd_problem = std::make_unique<FiniteSumProblem>(
        FiniteSumProblem::random_shared_q(static_cast<std::size_t>(cfg.n), cfg.d, cfg.instance_seed));
    const SgdRegime regime = sgd_regime_from_string(cfg.sgd_regime);
    p.sgd_oracle = std::make_unique<SgdFieldOracle>(
        *p.sgd_problem, regime,
        MinibatchSpec{static_cast<std::size_t>(cfg.batch), false});
    p.base = p.sgd_oracle.get();
    p.w0 = ParamVec::Zero(cfg.d);
    p.rc = p.sgd_problem->sgd_constants(regime, static_cast<std::size_t>(cfg.batch));
    p.dc = derive_constants(p.rc, p.sgd_problem->lyapunov_v(regime, p.w0) - p.rc.v_star);
  } else if (cfg.problem_type == "td") {
    if (cfg.td_p && cfg.td_r) {
      p.mrp = std::make_unique<Mrp>(*cfg.td_p, *cfg.td_r, cfg.td_lambda);
    } else {
      p.mrp = std::make_unique<Mrp>(Mrp::random(cfg.n, cfg.td_lambda, cfg.instance_seed));
    }
    if (cfg.td_phi) {
      TdFeatures f;
      f.phi = *cfg.td_phi;
      f.full_rank = Eigen::ColPivHouseholderQR<Matrix>(f.phi).rank() == f.phi.cols();
      p.td_features = std::make_unique<TdFeatures>(std::move(f));
    } else if (cfg.td_features == "tabular") {
      p.td_features = std::make_unique<TdFeatures>(TdFeatures::tabular(*p.mrp));
    } else {
      if (cfg.d < 1) throw ParseError(0, "td needs d >= 1");
      p.td_features = std::make_unique<TdFeatures>(TdFeatures::random(*p.mrp, cfg.d, cfg.instance_seed + 1));
    }
    p.td_oracle = std::make_unique<TdFieldOracle>(*p.mrp, *p.td_features);
    p.base = p.td_oracle.get();
    p.w0 = ParamVec::Zero(p.td_features->phi.cols());
    const bool vw = cfg.schedule == "td_poly" || cfg.bound == "td_fast";
    p.rc = vw ? td_constants_vw(*p.mrp, *p.td_features) : td_constants(*p.mrp, *p.td_features);
    const ParamVec vstar = p.mrp->value_function();
    p.td_vstar2 = vstar.dot(p.mrp->stationary().asDiagonal() * vstar);
    p.td_vmin = feature_covariance_vmin(*p.mrp, *p.td_features);
    p.td_w0_w = p.td_oracle->lyapunov_w(p.w0);
    p.td_wstar = p.td_oracle->fixed_point();
    p.dc = derive_constants(p.rc, p.td_oracle->lyapunov_v(p.w0));
  } else if (cfg.problem_type == "em") {
    if (cfg.em_data) {
      ParamVec y(static_cast<Eigen::Index>(cfg.em_data->size()));
      for (std::size_t i = 0; i < cfg.em_data->size(); ++i) y[static_cast<Eigen::Index>(i)] = (*cfg.em_data)[i];
      ParamVec w(static_cast<Eigen::Index>(cfg.em_weights.size()));
      for (std::size_t i = 0; i < cfg.em_weights.size(); ++i) w[static_cast<Eigen::Index>(i)] = cfg.em_weights[i];
      p.gmm = std::make_unique<GmmModel>(std::move(y), std::move(w));
    } else {
      if (cfg.em_true_means.empty() || cfg.em_weights.empty())
        throw ParseError(0, "em needs true_means and weights (or explicit data)");
      ParamVec means(static_cast<Eigen::Index>(cfg.em_true_means.size()));
      for (std::size_t i = 0; i < cfg.em_true_means.size(); ++i)
        means[static_cast<Eigen::Index>(i)] = cfg.em_true_means[i];
      ParamVec w(static_cast<Eigen::Index>(cfg.em_weights.size()));
      for (std::size_t i = 0; i < cfg.em_weights.size(); ++i) w[static_cast<Eigen::Index>(i)] = cfg.em_weights[i];
      p.gmm = std::make_unique<GmmModel>(GmmModel::generate(static_cast<std::size_t>(cfg.n), means, w,
                                                            cfg.instance_seed));
    }
    p.em_constants = estimate_em_constants(*p.gmm, cfg.instance_seed ^ 0x5eedULL);
    EmFieldOracle::Kind kind = EmFieldOracle::Kind::minibatch;
    std::size_t batch_or_m = static_cast<std::size_t>(cfg.batch);
    EmAlgo algo = EmAlgo::minibatch;
    if (cfg.em_oracle == "full") {
      kind = EmFieldOracle::Kind::full;
    } else if (cfg.em_oracle == "saem_es") {
      kind = EmFieldOracle::Kind::saem_exact;
      batch_or_m = static_cast<std::size_t>(cfg.mc_samples);
      algo = EmAlgo::saem_es;
    } else if (cfg.em_oracle == "saem_is") {
      kind = EmFieldOracle::Kind::saem_is;
      batch_or_m = static_cast<std::size_t>(cfg.mc_samples);
      algo = EmAlgo::saem_is;
    }
    p.em_oracle = std::make_unique<EmFieldOracle>(*p.gmm, kind, batch_or_m);
    p.base = p.em_oracle.get();

    const ParamVec theta0 = em_default_start(*p.gmm);
    p.w0 = sbar(*p.gmm, theta0);

    const ParamVec theta_inf = em_fixed_point(*p.gmm, theta0);
    const double v_star = p.gmm->objective(theta_inf);
    p.rc = em_regime_constants(p.em_constants, algo, std::max<std::size_t>(1, batch_or_m), v_star);
    try {
      p.dc = derive_constants(p.rc, std::max(0.0, em_lyapunov_v(*p.gmm, p.w0) - v_star));
    } catch (const BiasTooLargeError&) {
      p.dc.reset();
    }
  } else if (cfg.problem_type == "spider") {
    if (cfg.d < 1) throw ParseError(0, "spider needs d >= 1");
    // Distinct Q_i: with a shared Q the component differences h_i(w) - h_i(w')
    // are index-independent and the path-integrated estimator is noiseless.
    p.sgd_problem = std::make_unique<FiniteSumProblem>(FiniteSumProblem::random_distinct_q(
        static_cast<std::size_t>(cfg.n), cfg.d, cfg.instance_seed));
    p.spider_field = std::make_unique<QuadraticComponentField>(*p.sgd_problem);
    p.w0 = ParamVec::Zero(cfg.d);
    p.rc.c_h0 = 0.0;
    p.rc.c_h1 = 1.0;
    p.rc.lyap_smoothness = p.sgd_problem->lipschitz_grad();
    p.rc.rho = 1.0;
    p.rc.c_lyap = 1.0;
    p.rc.v_star = p.sgd_problem->objective_min();
    p.dc = derive_constants(p.rc, p.sgd_problem->objective(p.w0) - p.rc.v_star);

    const double root_n = std::sqrt(static_cast<double>(cfg.n));
    p.spider_k_in = cfg.spider_k_in > 0 ? cfg.spider_k_in
                                        : static_cast<std::int64_t>(std::ceil(root_n));
    p.spider_b = cfg.spider_b > 0 ? cfg.spider_b : static_cast<std::int64_t>(std::ceil(root_n));
    const double lbar = std::sqrt(p.spider_field->mean_square_lipschitz());
    p.spider_gamma_max_vr = spider_gamma_max(p.rc.rho, p.rc.lyap_smoothness, lbar, p.rc.c_lyap,
                                             p.rc.c_h1, p.spider_k_in, p.spider_b);
    p.spider_delta1 = p.dc->vbar;
    p.spider_delta2 = 2.0 * p.rc.lyap_smoothness * p.rc.rho +
                      p.spider_gamma_max_vr * lbar * lbar *
                          (p.rc.c_lyap * p.rc.c_lyap + p.rc.rho * p.rc.rho) *
                          static_cast<double>(p.spider_k_in) / static_cast<double>(p.spider_b);
    if (cfg.spider_step == "tuned") {
      p.spider_gamma = p.spider_gamma_max_vr / 2.0;  // c_h0 = 0 for this family
    } else {
      p.spider_gamma = std::stod(cfg.spider_step);
    }
    validate_spider_config(
        SpiderConfig{p.spider_k_in, 1, p.spider_b, false, p.spider_gamma}, p.rc.rho,
        p.rc.lyap_smoothness, p.spider_field->mean_square_lipschitz(), p.rc.c_lyap, p.rc.c_h1);
  } else {
    throw ParseError(0, "unknown problem type " + cfg.problem_type);
  }

  // T-independent compression wrappers.
  if (!cfg.compressor.empty() && cfg.placement != "lowprec") {
    const CompressionOp op = parse_compression_op(cfg.compressor);
    if (cfg.placement == "field")
      p.wrapper = wrap_compressed_field(*p.base, op);
    else
      p.wrapper = wrap_perturbed_iterate(*p.base, op);
  }
  return p;
}

StepSchedule make_schedule(const ExperimentConfig& cfg, const BuiltProblem& p, std::int64_t horizon) {
  if (cfg.schedule == "constant") return ConstantStep{cfg.gamma};
  if (cfg.schedule == "sqrt_t")
    return ConstantStep{cfg.gamma / std::sqrt(static_cast<double>(horizon))};
  if (cfg.schedule == "poly") return PolynomialStep{cfg.gamma_tilde, cfg.t0, cfg.beta};
  if (cfg.schedule == "horizon")
    {
    const DerivedConstants& dc = p.derived();
    return HorizonTunedStep{dc.vbar, dc.eta0, p.rc.lyap_smoothness, dc.gamma_max, horizon};
  }
  if (cfg.schedule == "half_gamma_max") return ConstantStep{p.derived().gamma_max.value() / 2.0};
  if (cfg.schedule == "poly_tuned") {
    const double gt = resolve_poly_tuned_gamma_tilde(cfg, p);
    return PolynomialStep{gt, resolve_poly_tuned_t0(cfg, p, gt), 1.0};
  }
  if (cfg.schedule == "td_horizon") {
    const double lam = cfg.td_lambda;
    const double gmax = 2.0 * (1.0 - lam) / (3.0 * (1.0 + lam) * (1.0 + lam));
    return HorizonTunedStep{p.td_w0_w, 6.0 * (1.0 + 2.0 * p.td_vstar2), 1.0, MaxStep::bounded(gmax),
                            horizon};
  }
  if (cfg.schedule == "td_poly") {
    const double gt = resolve_td_poly_gamma_tilde(cfg, p);
    return PolynomialStep{gt, resolve_td_poly_t0(cfg, p, gt), 1.0};
  }
  throw ParseError(0, "unknown schedule " + cfg.schedule);
}

double lowprec_bound_value(const BuiltProblem& p, double gamma_bar, std::int64_t t, double delta,
                           Eigen::Index dim) {
  const double l = p.rc.lyap_smoothness;
  const double noise = p.rc.sigma2_0;  // M^2 / n
  const double root_d = std::sqrt(static_cast<double>(dim));
  return 2.0 * p.dc->vbar / (gamma_bar * static_cast<double>(t)) + gamma_bar * l * noise +
         root_d * delta * l * (3.0 + noise);
}

ReplicateOut run_sa_replicate(const ExperimentConfig& cfg, const BuiltProblem& p,
                              const FieldOracle& oracle, const StepSchedule& schedule,
                              std::int64_t horizon, std::int64_t replicate, std::int64_t stride,
                              bool want_running) {
  RunOptions opts;
  opts.replicate = replicate;
  opts.store_iterates = cfg.statistic == "avg_iterate_w";
  const std::uint64_t seed = split_seed(cfg.master_seed, static_cast<std::uint64_t>(replicate));
  TrajectoryLog log = run_sa(oracle, schedule, horizon, p.w0, seed, opts);

  ReplicateOut out;
  double sum_w = 0.0;
  double run_num = 0.0, run_den = 0.0;
  for (const auto& r : log.records) {
    sum_w += r.lyap_w;
    if (want_running) {
      const double wt = r.gamma * std::max(omega(p.rc, *p.dc, r.gamma), 0.0);
      run_num += wt * r.lyap_w;
      run_den += wt;
    }
    if (r.k % stride == 0 || r.k == horizon - 1) {
      out.rows.push_back({r.k, r.gamma, r.lyap_w, r.lyap_v, r.normh2});
      if (want_running) out.running.push_back(run_den > 0.0 ? run_num / run_den : kNaN);
    }
  }

  if (cfg.statistic == "mean_w") {
    out.stat = sum_w / static_cast<double>(log.records.size());
  } else if (cfg.statistic == "last_w") {
    out.stat = oracle.lyapunov_w(log.final_w);
  } else if (cfg.statistic == "last_v2") {
    out.stat = 2.0 * oracle.lyapunov_v(log.final_w);
  } else {  // avg_iterate_w
    ParamVec acc = ParamVec::Zero(p.w0.size());
    for (const auto& w : log.iterates) acc += w;
    acc /= static_cast<double>(log.iterates.size());
    out.stat = oracle.lyapunov_w(acc);
  }
  return out;
}

ReplicateOut run_spider_replicate(const ExperimentConfig& cfg, const BuiltProblem& p,
                                  std::int64_t horizon, std::int64_t replicate, std::int64_t stride) {
  SpiderConfig config;
  config.inner_steps = p.spider_k_in;
  config.outer_epochs = std::max<std::int64_t>(1, (horizon + p.spider_k_in - 1) / p.spider_k_in);
  config.batch = p.spider_b;
  config.gamma = p.spider_gamma;
  const auto& problem = *p.sgd_problem;
  const std::uint64_t seed = split_seed(cfg.master_seed, static_cast<std::uint64_t>(replicate));
  SpiderLog log = run_spider(
      *p.spider_field, config, p.w0, seed,
      [&problem](const ParamVec& w) { return problem.full_gradient(w).squaredNorm(); },
      [&problem](const ParamVec& w) { return problem.objective(w); }, true);

  ReplicateOut out;
  double sum_w = 0.0;
  std::int64_t k = 0;
  for (const auto& r : log.records) {
    sum_w += r.lyap_w;
    if (k % stride == 0 || k == static_cast<std::int64_t>(log.records.size()) - 1)
      out.rows.push_back({k, r.gamma, r.lyap_w, r.lyap_v, r.normh2});
    ++k;
  }
  if (cfg.statistic == "last_w")
    out.stat = problem.full_gradient(log.final_w).squaredNorm();
  else
    out.stat = sum_w / static_cast<double>(log.records.size());
  return out;
}

std::vector<double> bound_column(const ExperimentConfig& cfg, const BuiltProblem& p,
                                 const std::vector<double>& gammas, std::int64_t horizon) {
  if (cfg.bound == "none") return {};
  BoundInputs in;
  in.rc = p.rc;
  if (cfg.bound == "running_avg" || cfg.bound == "tuned_step" || cfg.bound == "poly_last")
    in.dc = p.derived();
  if (cfg.bound == "running_avg") {
    in.gammas = gammas;
    return bound_curve(BoundTheorem::running_avg, in, horizon);
  }
  if (cfg.bound == "tuned_step") return bound_curve(BoundTheorem::tuned_step, in, horizon);
  if (cfg.bound == "poly_last") {
    in.w0_lyap_w = p.base != nullptr ? p.base->lyapunov_w(p.w0) : 0.0;
    in.gamma_tilde = resolve_poly_tuned_gamma_tilde(cfg, p);
    in.t0 = resolve_poly_tuned_t0(cfg, p, in.gamma_tilde);
    return bound_curve(BoundTheorem::poly_last, in, horizon);
  }
  if (cfg.bound == "td_robust") {
    in.lambda = cfg.td_lambda;
    in.vstar_norm2_dpi = p.td_vstar2;
    in.td_w0_w = p.td_w0_w;
    return bound_curve(BoundTheorem::td_robust, in, horizon);
  }
  if (cfg.bound == "td_fast") {
    in.lambda = cfg.td_lambda;
    in.vstar_norm2_dpi = p.td_vstar2;
    in.v_min = p.td_vmin;
    in.gamma_tilde = resolve_td_poly_gamma_tilde(cfg, p);
    in.t0 = resolve_td_poly_t0(cfg, p, in.gamma_tilde);
    in.w0_lyap_w = (p.w0 - p.td_wstar).squaredNorm();
    return bound_curve(BoundTheorem::td_fast, in, horizon);
  }
  if (cfg.bound == "vr_tuned") {
    in.delta1 = p.spider_delta1;
    in.delta2 = p.spider_delta2;
    in.gamma_vr = p.spider_gamma;
    in.c_h0 = p.rc.c_h0;
    in.spider_rho = p.rc.rho;
    return bound_curve(BoundTheorem::vr_tuned, in, horizon);
  }
  if (cfg.bound == "lowprec") {
    const double delta = std::get<StochasticRoundOp>(parse_compression_op(cfg.compressor)).delta;
    const double gamma_bar = cfg.gamma / std::sqrt(static_cast<double>(horizon));
    std::vector<double> out(static_cast<std::size_t>(horizon));
    for (std::int64_t t = 1; t <= horizon; ++t)
      out[static_cast<std::size_t>(t - 1)] =
          lowprec_bound_value(p, gamma_bar, t, delta, p.base->dim());
    return out;
  }
  throw ParseError(0, "unknown bound " + cfg.bound);
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SaError("cannot write " + path);
  out << content;
}

}  // namespace

ExperimentSummary run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
  BuiltProblem problem = build_problem(cfg);
  std::filesystem::create_directories(out_dir);

  ExperimentSummary summary;
  std::string line = "problem=" + cfg.problem_type + " statistic=" + cfg.statistic;

  for (const std::int64_t horizon : cfg.horizons) {
    const std::int64_t stride = effective_stride(cfg.log_stride, horizon);
    const bool spider = cfg.problem_type == "spider";

    // Per-horizon oracle: low-precision wrapping is tied to the constant step.
    std::unique_ptr<FieldOracle> lowprec;
    const FieldOracle* oracle = problem.wrapper ? problem.wrapper.get() : problem.base;
    StepSchedule schedule = spider ? StepSchedule(ConstantStep{1.0}) : make_schedule(cfg, problem, horizon);
    if (!spider && !cfg.compressor.empty() && cfg.placement == "lowprec") {
      const double gamma_bar = schedule_gamma(schedule, 0);
      lowprec = wrap_low_precision(*problem.base, parse_compression_op(cfg.compressor), gamma_bar);
      oracle = lowprec.get();
      schedule = ConstantStep{gamma_bar};
    }

    std::vector<double> gammas;
    if (!spider) {
      gammas.resize(static_cast<std::size_t>(horizon));
      for (std::int64_t k = 0; k < horizon; ++k)
        gammas[static_cast<std::size_t>(k)] = schedule_gamma(schedule, k);
    }

    // The prefix bound on the weighted running average is valid for any
    // admissible step sequence of an uncompressed SA run; check it pointwise
    // alongside whichever bound the config tabulates.
    const bool pointwise_check = cfg.check_bound && cfg.bound != "none" && !spider &&
                                 cfg.compressor.empty() && problem.dc.has_value();
    const bool want_running = cfg.bound == "running_avg" || pointwise_check;
    std::vector<ReplicateOut> results(static_cast<std::size_t>(cfg.replications));
    {
      std::atomic<std::int64_t> next{0};
      std::exception_ptr error;
      std::mutex error_mutex;
      const unsigned workers = std::max(
          1u, std::min(std::thread::hardware_concurrency(),
                       static_cast<unsigned>(cfg.replications)));
      std::vector<std::thread> pool;
      pool.reserve(workers);
      for (unsigned t = 0; t < workers; ++t) {
        pool.emplace_back([&]() {
          while (true) {
            const std::int64_t r = next.fetch_add(1);
            if (r >= cfg.replications) return;
            try {
              results[static_cast<std::size_t>(r)] =
                  spider ? run_spider_replicate(cfg, problem, horizon, r, stride)
                         : run_sa_replicate(cfg, problem, *oracle, schedule, horizon, r, stride,
                                            want_running);
            } catch (...) {
              std::lock_guard<std::mutex> lock(error_mutex);
              if (!error) error = std::current_exception();
              next.store(cfg.replications);
              return;
            }
          }
        });
      }
      for (auto& th : pool) th.join();
      if (error) std::rethrow_exception(error);
    }

    std::vector<double> stats(results.size());
    for (std::size_t i = 0; i < results.size(); ++i) stats[i] = results[i].stat;

    HorizonResult hr;
    hr.horizon = horizon;
    hr.stat_mean = mean(stats);
    hr.stat_se = standard_error(stats);

    const std::vector<double> bounds = bound_column(cfg, problem, gammas, horizon);
    const std::string dir = out_dir + "/T" + std::to_string(horizon);
    std::filesystem::create_directories(dir);

    if (cfg.write_trajectories) {
      std::string csv = "replicate,k,gamma,W,V,normh2\n";
      char buf[224];
      for (std::size_t r = 0; r < results.size(); ++r) {
        for (const auto& row : results[r].rows) {
          std::snprintf(buf, sizeof(buf), "%zu,%" PRId64 ",%.17g,%.17g,%.17g,%.17g\n", r, row.k,
                        row.gamma, row.w, row.v, row.normh2);
          csv += buf;
        }
      }
      write_file(dir + "/trajectory.csv", csv);
    }

    {
      std::string csv = "k,mean_W,se_W,bound\n";
      char buf[224];
      const auto& ks = results.front().rows;
      for (std::size_t j = 0; j < ks.size(); ++j) {
        std::vector<double> w_at_k(results.size());
        for (std::size_t r = 0; r < results.size(); ++r) w_at_k[r] = results[r].rows[j].w;
        const double b =
            bounds.empty() ? kNaN : bounds[static_cast<std::size_t>(ks[j].k)];
        std::snprintf(buf, sizeof(buf), "%" PRId64 ",%.17g,%.17g,%.17g\n", ks[j].k, mean(w_at_k),
                      standard_error(w_at_k), b);
        csv += buf;
      }
      write_file(dir + "/aggregate.csv", csv);
    }

    if (!bounds.empty()) {
      hr.bound = bounds.back();
      hr.bound_checked = cfg.check_bound;
      if (cfg.check_bound) {
        hr.bound_pass = cfg.bound == "running_avg"
                            ? true
                            : hr.stat_mean <= hr.bound + 3.0 * hr.stat_se;
        if (pointwise_check) {
          // Weighted running mean of W against the prefix bound built from
          // the steps actually used, at every logged k past the start.
          BoundInputs prefix_in;
          prefix_in.rc = problem.rc;
          prefix_in.dc = problem.derived();
          prefix_in.gammas = gammas;
          const std::vector<double> prefix =
              bound_curve(BoundTheorem::running_avg, prefix_in, horizon);
          const auto& ks = results.front().rows;
          for (std::size_t j = 0; j < ks.size(); ++j) {
            if (ks[j].k == 0) continue;
            const double bnd = prefix[static_cast<std::size_t>(ks[j].k)];
            if (!std::isfinite(bnd)) continue;  // some step exceeded gamma_max: nothing certified
            std::vector<double> vals(results.size());
            for (std::size_t r = 0; r < results.size(); ++r) vals[r] = results[r].running[j];
            const double m = mean(vals);
            const double se = standard_error(vals);
            if (!(m <= bnd + 3.0 * se)) {
              hr.bound_pass = false;
              break;
            }
          }
        }
        if (!hr.bound_pass) summary.checks_pass = false;
      }
    }

    line += " T=" + std::to_string(horizon) + ":" + fmt_short(hr.stat_mean) + "(se " +
            fmt_short(hr.stat_se) + ")";
    if (!bounds.empty()) {
      line += " bound=" + fmt_short(hr.bound);
      if (cfg.check_bound) line += hr.bound_pass ? " PASS" : " FAIL";
    }
    summary.horizons.push_back(hr);
  }

  if (summary.horizons.size() >= 2) {
    std::vector<RatePoint> pts;
    for (const auto& hr : summary.horizons)
      pts.push_back({static_cast<double>(hr.horizon), hr.stat_mean});
    try {
      summary.slope = pts.size() >= 4 ? fit_rate(pts) : fit_rate_loose(pts);
    } catch (const SaError&) {
      summary.slope = fit_rate_loose(pts);
    }
    line += " slope=" + fmt_short(summary.slope->slope);
    if (cfg.slope_min && summary.slope->slope < *cfg.slope_min) summary.checks_pass = false;
    if (cfg.slope_max && summary.slope->slope > *cfg.slope_max) summary.checks_pass = false;
  }
  if (cfg.final_max && !summary.horizons.empty()) {
    if (!(summary.horizons.back().stat_mean <= *cfg.final_max)) summary.checks_pass = false;
  }

  line += summary.checks_pass ? " checks=PASS" : " checks=FAIL";
  summary.line = line;
  write_file(out_dir + "/summary.txt", line + "\n");
  return summary;
}

}  // namespace sa
