#include <doctest.h>

#include <cmath>

#include "sa/diagnostics.hpp"
#include "sa/problems/em.hpp"
#include "sa/sa_run.hpp"

using namespace sa;

namespace {

GmmModel separated() {
  ParamVec means(2);
  means << -3.0, 3.0;
  ParamVec weights(2);
  weights << 0.5, 0.5;
  return GmmModel::generate(20, means, weights, 2024);
}

ParamVec theta_spread(const GmmModel& model) {
  const Eigen::Index k = model.latent_cardinality();
  ParamVec theta(k);
  const double lo = model.observations().minCoeff();
  const double hi = model.observations().maxCoeff();
  for (Eigen::Index z = 0; z < k; ++z)
    theta[z] = lo + (hi - lo) * (static_cast<double>(z) + 0.5) / static_cast<double>(k);
  return theta;
}

}  // namespace

TEST_CASE("K = 1: sbar is the data statistic, independent of theta") {
  ParamVec y(4);
  y << 1.0, 2.0, 3.0, 6.0;
  const GmmModel model(y, ParamVec::Ones(1));
  ParamVec t1(1), t2(1);
  t1 << 0.0;
  t2 << 42.0;
  const ParamVec s1 = sbar(model, t1);
  CHECK((s1 - sbar(model, t2)).norm() == doctest::Approx(0.0));
  CHECK(s1[0] == doctest::Approx(1.0));  // responsibility mass
  CHECK(s1[1] == doctest::Approx(3.0));  // sample mean
  // t_map(sbar) has the sample mean as its fixed point
  CHECK(model.t_map(s1)[0] == doctest::Approx(3.0));
  // mean field is linear with root at the data statistic
  ParamVec w(2);
  w << 1.0, 0.0;
  CHECK((em_mean_field(model, w) - (s1 - w)).norm() < 1e-14);
}

TEST_CASE("symmetric data at theta = 0 gives half/half responsibilities") {
  ParamVec y(2);
  y << -1.7, 1.7;
  ParamVec weights(2);
  weights << 0.5, 0.5;
  const GmmModel model(y, weights);
  ParamVec theta = ParamVec::Zero(2);
  for (std::size_t i = 0; i < 2; ++i) {
    const Eigen::VectorXd post = model.posterior(i, theta);
    CHECK(post[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(post[1] == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("deterministic EM fixed point zeroes the mean field and the likelihood gradient") {
  const GmmModel model = separated();
  const ParamVec theta_inf = em_fixed_point(model, theta_spread(model));
  const ParamVec w_inf = sbar(model, theta_inf);
  REQUIRE(em_mean_field(model, w_inf).norm() < 1e-8);
  CHECK(model.grad_objective(model.t_map(w_inf)).norm() < 1e-6);
  // same equivalence through central differences of F o T
  const double eps = 1e-6;
  for (Eigen::Index j = 0; j < w_inf.size(); ++j) {
    ParamVec wp = w_inf, wm = w_inf;
    wp[j] += eps;
    wm[j] -= eps;
    const double fd = (em_lyapunov_v(model, wp) - em_lyapunov_v(model, wm)) / (2 * eps);
    CHECK(std::abs(fd) < 1e-6);
  }
}

TEST_CASE("likelihood descent along the full-batch trajectory") {
  const GmmModel model = separated();
  ParamVec w = sbar(model, theta_spread(model));
  double prev = em_lyapunov_v(model, w);
  for (int k = 0; k < 50; ++k) {
    w = w + em_mean_field(model, w);
    const double cur = em_lyapunov_v(model, w);
    CHECK(cur <= prev + 1e-12);
    prev = cur;
  }
}

TEST_CASE("full-batch SA with gamma = 1 is bitwise the deterministic EM trajectory") {
  const GmmModel model = separated();
  const EmFieldOracle oracle(model, EmFieldOracle::Kind::full, 1);
  const ParamVec w0 = sbar(model, theta_spread(model));
  const TrajectoryLog log = run_sa(oracle, ConstantStep{1.0}, 50, w0, 7, {.store_iterates = true});

  ParamVec w = w0;
  for (int k = 0; k < 50; ++k) {
    REQUIRE(log.iterates[static_cast<std::size_t>(k)] == w);
    w += 1.0 * em_mean_field(model, w);
  }
  CHECK(log.final_w == w);
}

TEST_CASE("grad V = -B h exactly, and matches finite differences of F o T") {
  const GmmModel model = separated();
  Rng rng(5);
  const ParamVec w_base = sbar(model, theta_spread(model));
  for (int rep = 0; rep < 20; ++rep) {
    ParamVec w = w_base;
    for (Eigen::Index j = 0; j < w.size(); ++j) w[j] += 0.05 * rng.normal();
    for (Eigen::Index z = 0; z < 2; ++z) w[z] = std::max(w[z], 0.05);

    const ParamVec g = model.grad_v(w);
    CHECK((g + model.b_matrix(w) * em_mean_field(model, w)).norm() < 1e-10);

    const double eps = 1e-6;
    for (Eigen::Index j = 0; j < w.size(); ++j) {
      ParamVec wp = w, wm = w;
      wp[j] += eps;
      wm[j] -= eps;
      const double fd = (em_lyapunov_v(model, wp) - em_lyapunov_v(model, wm)) / (2 * eps);
      CHECK(g[j] == doctest::Approx(fd).epsilon(1e-4));
    }
  }
}

TEST_CASE("mini-batch field: full batch is exact, singleton variance enumerates") {
  ParamVec y(3);
  y << -2.0, 0.5, 2.5;
  ParamVec weights(2);
  weights << 0.4, 0.6;
  const GmmModel model(y, weights);
  ParamVec w = sbar(model, theta_spread(model));
  Rng rng(6);

  CHECK((minibatch_em_field(model, w, 3, rng) - em_mean_field(model, w)).norm() < 1e-14);

  // b = 1: enumerate the three outcomes exactly
  const ParamVec theta = model.t_map(w);
  const ParamVec h = em_mean_field(model, w);
  double exact_var = 0.0;
  for (std::size_t i = 0; i < 3; ++i)
    exact_var += ((sbar_i(model, i, theta) - w) - h).squaredNorm() / 3.0;

  const int draws = 100000;
  std::vector<double> dev2(draws);
  ParamVec sum = ParamVec::Zero(w.size());
  for (int i = 0; i < draws; ++i) {
    const ParamVec f = minibatch_em_field(model, w, 1, rng);
    sum += f;
    dev2[i] = (f - h).squaredNorm();
  }
  CHECK(std::abs(mean(dev2) - exact_var) <= 3.0 * standard_error(dev2));
  CHECK((sum / draws - h).norm() <= 3.0 * std::sqrt(exact_var / draws));
  CHECK_THROWS_AS(minibatch_em_field(model, w, 4, rng), BatchTooLargeError);
}

TEST_CASE("SAEM exact sampling: unbiased, variance halves when m doubles") {
  const GmmModel model = separated();
  // mixed-responsibility point (theta = (-0.5, 0.5)) so sampling has variance
  ParamVec w(4);
  w << 0.5, 0.5, -0.25, 0.25;
  const ParamVec h = em_mean_field(model, w);
  Rng rng(8);

  auto variance_at = [&](std::size_t m) {
    const int reps = 10000;
    std::vector<double> dev2(reps);
    for (int r = 0; r < reps; ++r) dev2[r] = (saem_field_exact(model, w, m, rng) - h).squaredNorm();
    return std::pair<double, double>(mean(dev2), standard_error(dev2));
  };
  const auto [v2, se2] = variance_at(2);
  const auto [v4, se4] = variance_at(4);
  CHECK(std::abs(v4 - 0.5 * v2) <= 3.0 * (se4 + 0.5 * se2));
}

TEST_CASE("SAEM exact sampling is deterministic when K = 1") {
  ParamVec y(5);
  y << 1, 2, 3, 4, 5;
  const GmmModel model(y, ParamVec::Ones(1));
  ParamVec w(2);
  w << 1.0, 2.0;
  Rng rng(9);
  const ParamVec f = saem_field_exact(model, w, 3, rng);
  CHECK((f - em_mean_field(model, w)).norm() < 1e-14);
}

TEST_CASE("self-normalized IS coincides with exact sampling when the proposal is the posterior") {
  // Equal component means make the posterior equal to the prior weights,
  // which is exactly the IS proposal; same seed, same draws, weights 1/m.
  const GmmModel model = separated();
  const Eigen::Index k = 2;
  ParamVec w(2 * k);
  w << 0.5, 0.5, 0.6, 0.6;  // T(w) = (1.2, 1.2)
  const ParamVec f_exact = saem_field_exact(model, w, 16, *std::make_unique<Rng>(11));
  const ParamVec f_is = saem_field_is(model, w, 16, *std::make_unique<Rng>(11));
  CHECK((f_exact - f_is).norm() < 1e-12);
}

TEST_CASE("IS bias is positive but inside the certified envelope") {
  const GmmModel model = separated();
  ParamVec w(4);
  w << 0.5, 0.5, -0.25, 0.25;
  const ParamVec h = em_mean_field(model, w);
  const double s_star = stat_sup_norm(model);
  const double chi = chi_bar(model, w);
  Rng rng(12);

  auto bias_norm_at = [&](std::size_t m) {
    const int reps = 100000;
    ParamVec sum = ParamVec::Zero(w.size());
    std::vector<double> comp_se(reps);
    for (int r = 0; r < reps; ++r) {
      const ParamVec f = saem_field_is(model, w, m, rng);
      sum += f;
      comp_se[r] = (f - h).squaredNorm();
    }
    const ParamVec m_hat = sum / reps;
    const double se = std::sqrt(mean(comp_se) / reps);
    return std::pair<double, double>((m_hat - h).norm(), se);
  };

  const auto [bias16, se16] = bias_norm_at(16);
  CHECK(bias16 > 3.0 * se16);  // genuinely biased
  CHECK(bias16 <= 12.0 * s_star * chi / 16.0 + 3.0 * se16);

  // 1/m decay; the self-normalization carries O(1/m^2) corrections, so the
  // ratio sits just below 1/2 at moderate m.
  const auto [bias32, se32] = bias_norm_at(32);
  CHECK(bias32 <= 12.0 * s_star * chi / 32.0 + 3.0 * se32);
  CHECK(bias32 / bias16 > 0.35);
  CHECK(bias32 / bias16 < 0.60);
}

TEST_CASE("exponential-family structure: log joint = <S, phi> - psi + const") {
  const GmmModel model = separated();
  Rng rng(99);
  for (int rep = 0; rep < 20; ++rep) {
    ParamVec theta(2);
    theta << 6.0 * rng.uniform() - 3.0, 6.0 * rng.uniform() - 3.0;
    const ParamVec phi = model.natural_parameter(theta);
    const double psi = model.log_partition(theta);
    for (std::size_t i = 0; i < 3; ++i) {
      // the theta-independent offset is fixed by z = 0
      const double offset = model.log_unnormalized_joint(i, 0, theta) -
                            (model.sufficient_stat(i, 0).dot(phi) - psi);
      for (Eigen::Index z = 0; z < 2; ++z) {
        const double lhs = model.log_unnormalized_joint(i, z, theta);
        const double rhs = model.sufficient_stat(i, z).dot(phi) - psi + offset;
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
      }
    }
  }
  // t_map minimizes psi(theta) - <s, phi(theta)>: gradient check at the argmin
  ParamVec s(4);
  s << 0.4, 0.6, -0.8, 1.2;
  const ParamVec theta_hat = model.t_map(s);
  const double eps = 1e-6;
  for (Eigen::Index z = 0; z < 2; ++z) {
    ParamVec tp = theta_hat, tm = theta_hat;
    tp[z] += eps;
    tm[z] -= eps;
    const double up = model.log_partition(tp) - s.dot(model.natural_parameter(tp));
    const double um = model.log_partition(tm) - s.dot(model.natural_parameter(tm));
    CHECK(std::abs(up - um) / (2 * eps) < 1e-6);
  }
}

TEST_CASE("chi and s_star are exact enumerations") {
  ParamVec y(2);
  y << 0.0, 2.0;
  ParamVec weights(2);
  weights << 0.25, 0.75;
  const GmmModel model(y, weights);
  CHECK(stat_sup_norm(model) == doctest::Approx(std::sqrt(1.0 + 4.0)));
  ParamVec w(4);
  w << 0.25, 0.75, 0.0, 1.5;  // theta = (0, 2)
  const ParamVec theta = model.t_map(w);
  for (std::size_t i = 0; i < 2; ++i) {
    const Eigen::VectorXd post = model.posterior(i, theta);
    double expect = post[0] * post[0] / 0.25 + post[1] * post[1] / 0.75;
    CHECK(chi_i(model, i, w) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("t_map rejects non-positive masses and non-finite inputs") {
  const GmmModel model = separated();
  ParamVec bad(4);
  bad << 0.0, 1.0, 0.0, 1.0;
  CHECK_THROWS_AS(model.t_map(bad), DegeneratePosteriorError);
  bad << std::nan(""), 1.0, 0.0, 1.0;
  CHECK_THROWS_AS(model.t_map(bad), DegeneratePosteriorError);
}

TEST_CASE("estimated constants are positive and order correctly") {
  const GmmModel model = separated();
  const EmConstants c = estimate_em_constants(model, 99);
  CHECK(c.v_min > 0.0);
  CHECK(c.v_max >= c.v_min);
  CHECK(c.lyap_smoothness > 0.0);
  CHECK(c.sigma_bar2_0 == doctest::Approx(c.s_star * c.s_star));
  CHECK(c.c_chi_0 > 0.0);
  CHECK(c.n == 20);

  // the estimated drift constant v_min actually certifies the descent
  // inequality <grad V, h> <= -v_min ||h||^2 on fresh points
  Rng rng(101);
  const ParamVec base = sbar(model, theta_spread(model));
  for (int i = 0; i < 50; ++i) {
    ParamVec w = base;
    for (Eigen::Index j = 0; j < w.size(); ++j) w[j] *= 1.0 + 0.02 * rng.normal();
    const ParamVec h = em_mean_field(model, w);
    CHECK(model.grad_v(w).dot(h) <= -0.5 * c.v_min * h.squaredNorm() + 1e-12);
  }
}

TEST_CASE("EM cost budgets reproduce the case-split formulas") {
  EmConstants c;
  c.v_min = 1.0;
  c.v_max = 2.0;
  c.lyap_smoothness = 1.0;
  c.sigma_bar2_0 = 4.0;
  c.sigma_bar2_1 = 1.0;
  c.s_star = 0.05;
  c.c_chi_0 = 1.0;
  c.c_chi_1 = 0.0;
  c.n = 10;
  const double vbar = 2.0;

  SUBCASE("minibatch, high precision iteration count") {
    EmUnitCosts costs;
    costs.cost_t = 4.0;  // b* = 2 sits inside the high-precision range
    const EmBudget b = em_cost_budget(c, EmAlgo::minibatch, 0.9, costs, vbar);
    CHECK(b.regime == PrecisionRegime::high);
    CHECK(b.batch_or_m == 7);  // floor(2 sigma0/eps - sigma1)
    const double bb = static_cast<double>(b.batch_or_m);
    const double expect =
        8.0 * vbar * c.lyap_smoothness * c.sigma_bar2_0 / (c.v_min * c.v_min * bb * 0.9 * 0.9);
    CHECK(static_cast<double>(b.iterations) == doctest::Approx(std::ceil(expect)));
    CHECK(b.gamma == doctest::Approx(c.v_min * bb * 0.9 / (2.0 * c.sigma_bar2_0)));
  }

  SUBCASE("minibatch, expensive optimization map prefers the low-precision batch") {
    EmUnitCosts costs;
    costs.cost_t = 100.0;  // b* = 10 beats the high-precision boundary
    const EmBudget b = em_cost_budget(c, EmAlgo::minibatch, 0.9, costs, vbar);
    CHECK(b.regime == PrecisionRegime::low);
    CHECK(b.batch_or_m == 10);
    CHECK(b.gamma == doctest::Approx(c.v_min * 10.0 / (10.0 + c.sigma_bar2_1)));
  }

  SUBCASE("free optimization map gives batch 1") {
    EmUnitCosts costs;
    costs.cost_t = 0.0;
    const EmBudget b = em_cost_budget(c, EmAlgo::minibatch, 0.5, costs, vbar);
    CHECK(b.batch_or_m == 1);
  }

  SUBCASE("SAEM-ES optimal m in the high-precision regime") {
    EmUnitCosts costs;
    costs.cost_t = 1e6;  // m* above the HP boundary is impossible here
    costs.cost_mc = 1e6;
    const EmBudget b = em_cost_budget(c, EmAlgo::saem_es, 0.5, costs, vbar);
    // m(eps) = (2 sigma0/eps - sigma1)/n = (16 - 1)/10, floored inside HP
    CHECK(b.batch_or_m == 1);
    CHECK(b.regime == PrecisionRegime::high);
    const double expect = 8.0 * vbar * c.lyap_smoothness * c.sigma_bar2_0 /
                          (c.v_min * c.v_min * 10.0 * 1.0 * 0.25);
    CHECK(static_cast<double>(b.iterations) == doctest::Approx(std::ceil(expect)));
  }

  SUBCASE("epsilon outside the admissible interval is rejected") {
    CHECK_THROWS_AS(em_cost_budget(c, EmAlgo::minibatch, 8.0, {}, vbar), EpsilonOutOfRangeError);
  }

  SUBCASE("SAEM-IS sizes m to kill the bias floor") {
    const EmBudget b = em_cost_budget(c, EmAlgo::saem_is, 0.5, {}, vbar);
    const double c_b = 6.0 * c.s_star * c.v_max * std::sqrt(c.c_chi_0);
    CHECK(static_cast<double>(b.batch_or_m) >= 4.0 * c_b / (0.5 * c.v_min * 0.5));
  }
}

TEST_CASE("iteration budget is inversely proportional to the mini-batch size") {
  EmConstants c;
  c.v_min = 0.5;
  c.v_max = 1.0;
  c.lyap_smoothness = 2.0;
  c.sigma_bar2_0 = 4.0;
  c.sigma_bar2_1 = 0.0;
  c.s_star = 2.0;
  c.n = 16;
  const double eps = 0.01, vbar = 1.0;
  // go through the generic budget with the oracle's Table constants
  const RegimeConstants r1 = em_regime_constants(c, EmAlgo::minibatch, 1, 0.0);
  const RegimeConstants r2 = em_regime_constants(c, EmAlgo::minibatch, 2, 0.0);
  const auto t1 = epsilon_budget(derive_constants(r1, vbar), r1, eps);
  const auto t2 = epsilon_budget(derive_constants(r2, vbar), r2, eps);
  CHECK(t1.regime == PrecisionRegime::high);
  CHECK(std::abs(static_cast<double>(t1.iterations) - 2.0 * static_cast<double>(t2.iterations)) <=
        2.0);
}
