#include <benchmark/benchmark.h>

#include "sa/compression.hpp"
#include "sa/problems/em.hpp"
#include "sa/problems/sgd.hpp"
#include "sa/problems/td.hpp"
#include "sa/sa_run.hpp"
#include "sa/spider.hpp"

namespace {

using namespace sa;

void bm_sgd_step(benchmark::State& state) {
  const auto d = static_cast<Eigen::Index>(state.range(0));
  const FiniteSumProblem p = FiniteSumProblem::random_shared_q(50, d, 1);
  const SgdFieldOracle oracle(p, SgdRegime::nonconvex, {1, false});
  Rng rng(2);
  ParamVec w = ParamVec::Ones(d);
  for (auto _ : state) {
    w += 0.01 * oracle.sample(w, rng);
    benchmark::DoNotOptimize(w.data());
  }
}
BENCHMARK(bm_sgd_step)->Arg(10)->Arg(100);

void bm_run_sa_sgd(benchmark::State& state) {
  const FiniteSumProblem p = FiniteSumProblem::random_shared_q(50, 10, 1);
  const SgdFieldOracle oracle(p, SgdRegime::nonconvex, {1, false});
  const ParamVec w0 = ParamVec::Zero(10);
  for (auto _ : state) {
    const TrajectoryLog log = run_sa(oracle, ConstantStep{0.05}, state.range(0), w0, 7);
    benchmark::DoNotOptimize(log.final_w.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_run_sa_sgd)->Arg(1000)->Arg(10000);

void bm_td_sample(benchmark::State& state) {
  const Mrp mrp = Mrp::random(state.range(0), 0.5, 3);
  const TdFeatures feats = TdFeatures::random(mrp, 3, 4);
  const TdFieldOracle oracle(mrp, feats);
  Rng rng(5);
  ParamVec w = ParamVec::Zero(3);
  for (auto _ : state) benchmark::DoNotOptimize(oracle.sample(w, rng).data());
}
BENCHMARK(bm_td_sample)->Arg(10)->Arg(100);

void bm_top_h(benchmark::State& state) {
  Rng rng(6);
  ParamVec x(state.range(0));
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.normal();
  const CompressionOp op = TopHOp{state.range(0) / 10};
  for (auto _ : state) benchmark::DoNotOptimize(compress(op, x, rng).data());
}
BENCHMARK(bm_top_h)->Arg(100)->Arg(1000);

void bm_stochastic_round(benchmark::State& state) {
  Rng rng(7);
  ParamVec x(state.range(0));
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.normal();
  const CompressionOp op = StochasticRoundOp{0.05};
  for (auto _ : state) benchmark::DoNotOptimize(compress(op, x, rng).data());
}
BENCHMARK(bm_stochastic_round)->Arg(100)->Arg(1000);

void bm_saem_is_field(benchmark::State& state) {
  ParamVec means(2), weights(2);
  means << -1.5, 1.5;
  weights << 0.5, 0.5;
  const GmmModel model = GmmModel::generate(12, means, weights, 8);
  const ParamVec w = sbar(model, em_default_start(model));
  Rng rng(9);
  for (auto _ : state)
    benchmark::DoNotOptimize(saem_field_is(model, w, state.range(0), rng).data());
}
BENCHMARK(bm_saem_is_field)->Arg(8)->Arg(64);

void bm_spider_epoch(benchmark::State& state) {
  const FiniteSumProblem p = FiniteSumProblem::random_distinct_q(64, 8, 10);
  const QuadraticComponentField field(p);
  const ParamVec w0 = ParamVec::Ones(8);
  for (auto _ : state) {
    const SpiderLog log = run_spider(
        field, SpiderConfig{8, 4, 8, false, 1e-3}, w0, 11,
        [&p](const ParamVec& w) { return p.full_gradient(w).squaredNorm(); }, {}, false);
    benchmark::DoNotOptimize(log.final_w.data());
  }
}
BENCHMARK(bm_spider_epoch);

}  // namespace

BENCHMARK_MAIN();
