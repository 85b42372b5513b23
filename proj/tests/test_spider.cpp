#include <doctest.h>

#include <cmath>
#include <vector>

#include "sa/diagnostics.hpp"
#include "sa/spider.hpp"

using namespace sa;

namespace {

FiniteSumProblem small_quadratic(std::size_t n, Eigen::Index d, std::uint64_t seed) {
  // distinct components: a shared Q would make the path-integrated
  // estimator exactly noiseless
  return FiniteSumProblem::random_distinct_q(n, d, seed);
}

RegimeConstants spider_bundle(const FiniteSumProblem& p) {
  RegimeConstants rc;
  rc.c_h0 = 0.0;
  rc.c_h1 = 1.0;
  rc.lyap_smoothness = p.lipschitz_grad();
  rc.rho = 1.0;
  rc.c_lyap = 1.0;
  rc.v_star = p.objective_min();
  return rc;
}

std::vector<std::vector<std::size_t>> all_subsets(std::size_t n, std::size_t b) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> idx(b);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start, std::size_t depth) {
    if (depth == b) {
      out.push_back(idx);
      return;
    }
    for (std::size_t i = start; i < n; ++i) {
      idx[depth] = i;
      rec(i + 1, depth + 1);
    }
  };
  rec(0, 0);
  return out;
}

}  // namespace

TEST_CASE("single component: the estimator is the mean field at every step") {
  const FiniteSumProblem p = small_quadratic(1, 3, 5);
  const QuadraticComponentField field(p);
  SpiderConfig cfg{4, 3, 1, false, 0.1};
  const SpiderLog log = run_spider(field, cfg, ParamVec::Ones(3), 9,
                                   [&p](const ParamVec& w) { return p.full_gradient(w).squaredNorm(); });
  for (const auto& r : log.records) CHECK(r.err2 <= 1e-24);
}

TEST_CASE("full batch without replacement telescopes to the exact mean field") {
  const FiniteSumProblem p = small_quadratic(6, 3, 7);
  const QuadraticComponentField field(p);
  SpiderConfig cfg{5, 2, 6, false, 0.05};
  const SpiderLog log = run_spider(field, cfg, ParamVec::Ones(3), 11,
                                   [&p](const ParamVec& w) { return p.full_gradient(w).squaredNorm(); });
  for (const auto& r : log.records) CHECK(r.err2 <= 1e-22 * std::max(1.0, r.normh2));
}

TEST_CASE("oracle call count matches n k_out + 2 k_out k_in b") {
  const FiniteSumProblem p = small_quadratic(9, 2, 13);
  const QuadraticComponentField field(p);
  SpiderConfig cfg{4, 3, 2, false, 0.02};
  const SpiderLog log = run_spider(field, cfg, ParamVec::Zero(2), 17,
                                   [](const ParamVec&) { return 0.0; });
  CHECK(log.component_calls == spider_call_count(9, 3, 4, 2));
  CHECK(log.component_calls == 9 * 3 + 2 * 3 * 4 * 2);
}

TEST_CASE("bias propagation identity by exhaustive batch enumeration (n = 5)") {
  // E[Hvr_{k+1} | F_k] - h(w_k) = Hvr_k - h(w_{k-1}) over uniform subsets.
  const FiniteSumProblem p = small_quadratic(5, 3, 19);
  const QuadraticComponentField field(p);
  Rng rng(21);
  ParamVec w_prev(3), w_cur(3), estimator(3);
  for (Eigen::Index i = 0; i < 3; ++i) {
    w_prev[i] = rng.normal();
    w_cur[i] = rng.normal();
    estimator[i] = rng.normal();
  }
  for (std::size_t b : {std::size_t{1}, std::size_t{2}, std::size_t{3}}) {
    const auto subsets = all_subsets(5, b);
    ParamVec mean_next = ParamVec::Zero(3);
    for (const auto& batch : subsets) {
      ParamVec next = estimator;
      for (std::size_t i : batch)
        next += (field.component(i, w_cur) - field.component(i, w_prev)) / static_cast<double>(b);
      mean_next += next;
    }
    mean_next /= static_cast<double>(subsets.size());
    const ParamVec lhs = mean_next - field.mean(w_cur);
    const ParamVec rhs = estimator - field.mean(w_prev);
    CHECK((lhs - rhs).norm() < 1e-12);
  }
}

TEST_CASE("variance bound by exhaustive batch enumeration (n = 5)") {
  // Var[Hvr_{k+1} | F_k] <= (Lbar^2 / b) gamma^2 ||Hvr_k||^2 with
  // w_k = w_{k-1} + gamma Hvr_k.
  const FiniteSumProblem p = small_quadratic(5, 3, 23);
  const QuadraticComponentField field(p);
  Rng rng(25);
  const double gamma = 0.3;
  ParamVec w_prev(3), estimator(3);
  for (Eigen::Index i = 0; i < 3; ++i) {
    w_prev[i] = rng.normal();
    estimator[i] = rng.normal();
  }
  const ParamVec w_cur = w_prev + gamma * estimator;
  const double lbar2 = field.mean_square_lipschitz();

  for (std::size_t b : {std::size_t{1}, std::size_t{2}, std::size_t{4}}) {
    const auto subsets = all_subsets(5, b);
    std::vector<ParamVec> outcomes;
    ParamVec mean_next = ParamVec::Zero(3);
    for (const auto& batch : subsets) {
      ParamVec next = estimator;
      for (std::size_t i : batch)
        next += (field.component(i, w_cur) - field.component(i, w_prev)) / static_cast<double>(b);
      outcomes.push_back(next);
      mean_next += next;
    }
    mean_next /= static_cast<double>(subsets.size());
    double var = 0.0;
    for (const auto& o : outcomes) var += (o - mean_next).squaredNorm();
    var /= static_cast<double>(outcomes.size());
    CHECK(var <= lbar2 / static_cast<double>(b) * gamma * gamma * estimator.squaredNorm() + 1e-12);
  }
}

TEST_CASE("gamma_max^vr is the positive root of the step hypothesis") {
  const double rho = 1.0, lv = 2.0, lbar = 1.5, cv = 1.0, ch1 = 1.0;
  for (std::int64_t k_in : {4, 8, 16}) {
    const double g = spider_gamma_max(rho, lv, lbar, cv, ch1, k_in, 8);
    const double lambda = lv + g * lbar * lbar * (cv * cv / rho + rho) *
                                  static_cast<double>(k_in) / 8.0;
    CHECK(std::max(1.0, ch1) * g * lambda == doctest::Approx(rho / 2.0).epsilon(1e-10));
  }
  // halving k_in/b increases the admissible step
  CHECK(spider_gamma_max(rho, lv, lbar, cv, ch1, 4, 8) >
        spider_gamma_max(rho, lv, lbar, cv, ch1, 8, 8));
  // degenerate Lipschitz constant collapses the quadratic
  CHECK(spider_gamma_max(rho, lv, 0.0, cv, ch1, 8, 8) ==
        doctest::Approx(rho / (2.0 * lv * std::max(1.0, ch1))));
}

TEST_CASE("tuned spider step") {
  CHECK(spider_step_tuned(3.0, 2.0, 1.0, 100, 0.0, 0.4) == doctest::Approx(0.2));
  CHECK(spider_step_tuned(1.0, 1.0, 1.0, 2, 0.5, 100.0) == doctest::Approx(1.0));
  // T -> infinity: the sqrt branch wins
  CHECK(spider_step_tuned(1.0, 1.0, 1.0, 1000000, 0.5, 1.0) ==
        doctest::Approx(std::sqrt(2.0 / 1000000.0)));
}

TEST_CASE("oracle budget call counts") {
  const SpiderBudget one = spider_oracle_budget(100, 1.0, true, 0.1);
  CHECK(one.inner_steps == 10);
  CHECK(one.batch == 10);
  CHECK(one.outer_epochs == 1);
  CHECK(one.total_calls == 300);  // 100 + 2 * 10 * 10

  const SpiderBudget tiny = spider_oracle_budget(1, 0.5, true);
  CHECK(tiny.inner_steps == 1);
  CHECK(tiny.batch == 1);

  const SpiderBudget doubled = spider_oracle_budget(200, 1.0, true, 0.1);
  CHECK(doubled.inner_steps == 15);
  CHECK(doubled.total_calls == doubled.outer_epochs * (200 + 2 * 15 * 15));
  CHECK(doubled.total_calls == 200 + 450);
}

TEST_CASE("aggregate descent bound holds within 3 SE on a small finite sum") {
  const FiniteSumProblem p = small_quadratic(8, 4, 29);
  const QuadraticComponentField field(p);
  const RegimeConstants rc = spider_bundle(p);
  const double lbar2 = field.mean_square_lipschitz();
  const std::int64_t k_in = 3, k_out = 12, b = 3;
  const double gmax = spider_gamma_max(rc.rho, rc.lyap_smoothness, std::sqrt(lbar2), rc.c_lyap,
                                       rc.c_h1, k_in, b);
  const double gamma = gmax / 2.0;
  const double lambda = rc.lyap_smoothness + gamma * lbar2 *
                            (rc.c_lyap * rc.c_lyap / rc.rho + rc.rho) *
                            static_cast<double>(k_in) / static_cast<double>(b);
  const ParamVec w0 = ParamVec::Ones(4);
  const double rhs = p.objective(w0) - p.objective_min();  // c_h0 = 0

  const int reps = 400;
  std::vector<double> lhs(reps);
  for (int r = 0; r < reps; ++r) {
    const SpiderLog log = run_spider(
        field, SpiderConfig{k_in, k_out, b, false, gamma}, w0, split_seed(4000, r),
        [&p](const ParamVec& w) { return p.full_gradient(w).squaredNorm(); });
    double acc = 0.0;
    for (const auto& rec : log.records) {
      acc += rec.gamma * (rc.rho / 2.0 - rc.c_h1 * rec.gamma * lambda) * rec.lyap_w;
      acc += rec.gamma * (rc.rho / 2.0 - rec.gamma * lambda) * rec.err2;
    }
    lhs[r] = acc;
  }
  CHECK(mean(lhs) <= rhs + 3.0 * standard_error(lhs));
}

TEST_CASE("config validation rejects oversized steps") {
  const FiniteSumProblem p = small_quadratic(4, 2, 31);
  const QuadraticComponentField field(p);
  const RegimeConstants rc = spider_bundle(p);
  const double lbar2 = field.mean_square_lipschitz();
  const double gmax =
      spider_gamma_max(rc.rho, rc.lyap_smoothness, std::sqrt(lbar2), rc.c_lyap, rc.c_h1, 2, 2);
  CHECK_NOTHROW(validate_spider_config({2, 2, 2, false, gmax * 0.99}, rc.rho, rc.lyap_smoothness,
                                       lbar2, rc.c_lyap, rc.c_h1));
  CHECK_THROWS_AS(validate_spider_config({2, 2, 2, false, gmax * 1.01}, rc.rho, rc.lyap_smoothness,
                                         lbar2, rc.c_lyap, rc.c_h1),
                  ConfigViolationError);
}
