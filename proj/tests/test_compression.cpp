#include <doctest.h>

#include <cmath>

#include "sa/compression.hpp"
#include "sa/diagnostics.hpp"
#include "sa/sa_run.hpp"

using namespace sa;

namespace {

ParamVec vec3(double a, double b, double c) {
  ParamVec v(3);
  v << a, b, c;
  return v;
}

// Deterministic negated-gradient field for F(w) = 1/2 w'Q w - b'w.
FunctionField gradient_field(const Matrix& q, const ParamVec& b) {
  return FunctionField(
      q.rows(), [q, b](const ParamVec& w) { return ParamVec(-(q * w - b)); },
      [q, b](const ParamVec& w) { return 0.5 * w.dot(q * w) - b.dot(w); },
      [q, b](const ParamVec& w) { return (q * w - b).squaredNorm(); });
}

}  // namespace

TEST_CASE("top-1 keeps the largest magnitude, lowest index on ties") {
  Rng rng(1);
  CHECK(compress(TopHOp{1}, vec3(3, -1, 2), rng) == vec3(3, 0, 0));
  CHECK(compress(TopHOp{2}, vec3(3, -1, 2), rng) == vec3(3, 0, 2));
  // tie: |x_0| = |x_2|, index 0 wins
  CHECK(compress(TopHOp{1}, vec3(-2, 1, 2), rng) == vec3(-2, 0, 0));
}

TEST_CASE("deterministic rounding follows the half-away-from-zero formula") {
  Rng rng(1);
  ParamVec x(4);
  x << 0.6, -0.4, 1.5, -1.5;
  const ParamVec q = compress(DeterministicRoundOp{1.0}, x, rng);
  CHECK(q[0] == 1.0);
  CHECK(q[1] == 0.0);
  CHECK(q[2] == 2.0);   // |1.5|/1 + 0.5 floors to 2
  CHECK(q[3] == -2.0);  // re-signed
}

TEST_CASE("stochastic rounding at x = 0.3 is Bernoulli(0.3) on {0, 1}") {
  Rng rng(2);
  const int draws = 100000;
  double acc = 0.0;
  ParamVec x(1);
  x << 0.3;
  for (int i = 0; i < draws; ++i) {
    const ParamVec q = compress(StochasticRoundOp{1.0}, x, rng);
    CHECK((q[0] == 0.0 || q[0] == 1.0));
    acc += q[0];
  }
  CHECK(std::abs(acc / draws - 0.3) <= 3.0 * std::sqrt(0.21 / draws));
}

TEST_CASE("stochastic rounding is exactly unbiased: two-outcome law on a 1-d grid") {
  const double delta = 0.25;
  for (int i = -40; i <= 40; ++i) {
    const double x = 0.0137 * i;
    const double lo = delta * std::floor(x / delta);
    const double frac = x / delta - std::floor(x / delta);
    const double mean_exact = frac * (lo + delta) + (1.0 - frac) * lo;
    CHECK(mean_exact == doctest::Approx(x).epsilon(1e-12));
  }
}

TEST_CASE("stochastic rounding is idempotent on lattice points") {
  Rng rng(3);
  ParamVec x(3);
  x << -0.75, 0.0, 1.25;
  const ParamVec q = compress(StochasticRoundOp{0.25}, x, rng);
  CHECK(q == x);
}

TEST_CASE("top-h contraction is exact and tight when magnitudes are equal") {
  Rng rng(4);
  const Eigen::Index d = 10;
  for (int rep = 0; rep < 10000; ++rep) {
    ParamVec x(d);
    for (Eigen::Index i = 0; i < d; ++i) x[i] = 2.0 * rng.uniform() - 1.0;
    const Eigen::Index h = 1 + static_cast<Eigen::Index>(rng.below(d));
    const ParamVec c = compress(TopHOp{h}, x, rng);
    const double delta_c = static_cast<double>(h) / static_cast<double>(d);
    CHECK((c - x).squaredNorm() <= (1.0 - delta_c) * x.squaredNorm() + 1e-12);
  }
  // equality when all |x_i| coincide
  ParamVec flat(4);
  flat << 1.0, -1.0, 1.0, -1.0;
  const ParamVec c = compress(TopHOp{3}, flat, rng);
  CHECK((c - flat).squaredNorm() == doctest::Approx((1.0 - 0.75) * flat.squaredNorm()));
}

TEST_CASE("unscaled rand-h meets the contraction certificate in expectation") {
  Rng rng(5);
  const Eigen::Index d = 6, h = 2;
  for (int pt = 0; pt < 20; ++pt) {
    ParamVec x(d);
    for (Eigen::Index i = 0; i < d; ++i) x[i] = 2.0 * rng.uniform() - 1.0;
    const int draws = 20000;
    std::vector<double> err(draws);
    for (int j = 0; j < draws; ++j) err[j] = (compress(RandHOp{h, false}, x, rng) - x).squaredNorm();
    const double expect = (1.0 - static_cast<double>(h) / d) * x.squaredNorm();
    CHECK(std::abs(mean(err) - expect) <= 3.0 * standard_error(err));
  }
}

TEST_CASE("scaled rand-h is unbiased with relative variance d/h - 1") {
  Rng rng(6);
  const Eigen::Index d = 6, h = 2;
  ParamVec x(d);
  for (Eigen::Index i = 0; i < d; ++i) x[i] = 2.0 * rng.uniform() - 1.0;
  const int draws = 100000;
  ParamVec sum = ParamVec::Zero(d);
  std::vector<double> err(draws);
  for (int j = 0; j < draws; ++j) {
    const ParamVec c = compress(RandHOp{h, true}, x, rng);
    sum += c;
    err[j] = (c - x).squaredNorm();
  }
  const double omega = static_cast<double>(d) / h - 1.0;
  CHECK((sum / draws - x).norm() <= 3.0 * std::sqrt(omega) * x.norm() / std::sqrt(draws));
  CHECK(mean(err) <= omega * x.squaredNorm() + 3.0 * standard_error(err));
}

TEST_CASE("deterministic rounding error is pointwise below d delta^2 / 4") {
  Rng rng(7);
  const double delta = 0.2;
  for (int rep = 0; rep < 10000; ++rep) {
    ParamVec x(5);
    for (Eigen::Index i = 0; i < 5; ++i) x[i] = 4.0 * rng.uniform() - 2.0;
    const ParamVec q = compress(DeterministicRoundOp{delta}, x, rng);
    const double err = (q - x).squaredNorm();
    CHECK(err <= 5.0 * delta * delta / 4.0 + 1e-15);
    CHECK(err <= 5.0 * delta * delta + 1e-15);  // the certified kappa
  }
}

TEST_CASE("identity and full top-h wrappers reproduce the inner field bitwise") {
  Matrix q(3, 3);
  q << 2, 0, 0, 0, 1, 0, 0, 0, 0.5;
  const ParamVec b = vec3(1, -1, 0.5);
  const FunctionField inner = gradient_field(q, b);
  const auto ident = wrap_compressed_field(inner, IdentityOp{});
  const auto top_full = wrap_compressed_field(inner, TopHOp{3});
  Rng rng(8);
  const ParamVec w = vec3(0.3, 0.7, -0.2);
  CHECK(ident->sample(w, rng) == inner.mean_field(w));
  CHECK(top_full->sample(w, rng) == inner.mean_field(w));
  CHECK(ident->mean_field(w) == inner.mean_field(w));
}

TEST_CASE("top-1 compressed gradient reproduces greedy coordinate descent") {
  Matrix q(3, 3);
  q << 3.0, 0.2, 0.0, 0.2, 1.0, 0.1, 0.0, 0.1, 2.0;
  const ParamVec b = vec3(1.0, -2.0, 0.5);
  const FunctionField inner = gradient_field(q, b);
  const auto wrapped = wrap_compressed_field(inner, TopHOp{1});
  const double gamma = 0.05;

  const TrajectoryLog log = run_sa(*wrapped, ConstantStep{gamma}, 50, vec3(1, 1, 1), 9,
                                   {.store_iterates = true});

  // Hand-rolled greedy rule: pick the largest-|.| gradient coordinate
  // (lowest index on ties) and step along it.
  ParamVec w = vec3(1, 1, 1);
  for (int k = 0; k < 50; ++k) {
    CHECK((log.iterates[static_cast<std::size_t>(k)] - w).norm() < 1e-14);
    const ParamVec g = q * w - b;
    Eigen::Index jbest = 0;
    for (Eigen::Index j = 1; j < 3; ++j)
      if (std::abs(g[j]) > std::abs(g[jbest])) jbest = j;
    w[jbest] -= gamma * g[jbest];
  }
  CHECK((log.final_w - w).norm() < 1e-14);
}

TEST_CASE("perturbed iterate with identity and on-lattice rounding is the inner field") {
  Matrix q = Matrix::Identity(2, 2) * 1.5;
  ParamVec b(2);
  b << 0.3, -0.3;
  const FunctionField inner = gradient_field(q, b);
  Rng rng(10);
  ParamVec w(2);
  w << 0.5, -0.25;  // on the 0.25 lattice
  const auto ident = wrap_perturbed_iterate(inner, IdentityOp{});
  CHECK(ident->sample(w, rng) == inner.mean_field(w));
  const auto rounded = wrap_perturbed_iterate(inner, DeterministicRoundOp{0.25});
  CHECK(rounded->sample(w, rng) == inner.mean_field(w));
}

TEST_CASE("perturbed-iterate bias is below the midpoint bound on a 1-d grid") {
  // F(w) = L/2 w^2; bias of H(Q_d(w)) is L (Q_d(w) - w), enumerated over
  // lattice offsets.
  const double lip = 2.0, delta = 0.5;
  Matrix q(1, 1);
  q << lip;
  const FunctionField inner = gradient_field(q, ParamVec::Zero(1));
  const auto wrapped = wrap_perturbed_iterate(inner, DeterministicRoundOp{delta});
  Rng rng(11);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    ParamVec w(1);
    w << 3.0 + delta * (static_cast<double>(i) / 200.0);  // sweep one cell
    const ParamVec h = wrapped->sample(w, rng);
    const double bias2 = (h - inner.mean_field(w)).squaredNorm();
    worst = std::max(worst, bias2);
    CHECK(bias2 <= lip * lip * delta * delta / 4.0 + 1e-12);
  }
  CHECK(worst > 0.0);  // quantization does bite somewhere on the cell
}

TEST_CASE("low-precision wrapper telescopes exactly under the identity op") {
  Matrix q(2, 2);
  q << 1.0, 0.0, 0.0, 2.0;
  ParamVec b(2);
  b << 0.2, -0.1;
  const FunctionField inner = gradient_field(q, b);
  const auto wrapped = wrap_low_precision(inner, IdentityOp{}, 0.1);
  Rng rng(12);
  ParamVec w(2);
  w << 0.4, 0.8;
  CHECK((wrapped->sample(w, rng) - inner.mean_field(w)).norm() < 1e-12);
}

TEST_CASE("low-precision wrapper is unbiased on the lattice with stochastic rounding") {
  Matrix q = Matrix::Identity(1, 1);
  const FunctionField inner = gradient_field(q, ParamVec::Zero(1));
  const double gamma_bar = 0.5, delta = 0.25;
  const auto wrapped = wrap_low_precision(inner, StochasticRoundOp{delta}, gamma_bar);
  Rng rng(13);
  ParamVec w(1);
  w << 0.75;  // lattice point
  const int draws = 100000;
  std::vector<double> vals(draws);
  for (int i = 0; i < draws; ++i) vals[i] = wrapped->sample(w, rng)[0];
  const double target = inner.mean_field(w)[0];
  CHECK(std::abs(mean(vals) - target) <= 3.0 * standard_error(vals));
}

TEST_CASE("low-precision wrapper converges to the inner field as delta vanishes") {
  Matrix q = Matrix::Identity(2, 2);
  ParamVec b(2);
  b << 1.0, -1.0;
  const FunctionField inner = gradient_field(q, b);
  const auto wrapped = wrap_low_precision(inner, StochasticRoundOp{1e-12}, 0.3);
  Rng rng(14);
  ParamVec w(2);
  w << 0.123, -0.456;
  CHECK((wrapped->sample(w, rng) - inner.mean_field(w)).norm() < 1e-6);
}

TEST_CASE("low-precision wrapper refuses a mismatched schedule") {
  Matrix q = Matrix::Identity(1, 1);
  const FunctionField inner = gradient_field(q, ParamVec::Zero(1));
  const auto wrapped = wrap_low_precision(inner, StochasticRoundOp{0.1}, 0.25);
  ParamVec w0(1);
  w0 << 1.0;
  CHECK_THROWS_AS(run_sa(*wrapped, ConstantStep{0.5}, 5, w0, 1), NonconstantStepError);
  CHECK_THROWS_AS(run_sa(*wrapped, PolynomialStep{1.0, 1, 1.0}, 5, w0, 1), NonconstantStepError);
  CHECK_NOTHROW(run_sa(*wrapped, ConstantStep{0.25}, 5, w0, 1));
}

TEST_CASE("constant propagation: deterministic top-1 gradient field") {
  const Eigen::Index d = 5;
  RegimeConstants rc;  // deterministic gradient field: tau = sigma2 = 0, c_h = (0,1)
  rc.c_h1 = 1.0;
  const CompressorProfile profile = profile_for(TopHOp{1}, d);
  PropagationExtras extras;
  extras.deterministic_pair = true;
  const RegimeConstants out =
      propagate_constants(profile, CompressionPlacement::field, rc, extras);
  CHECK(out.tau0 == 0.0);
  CHECK(out.tau1 == doctest::Approx(1.0 - 1.0 / static_cast<double>(d)));
  CHECK(out.sigma2_0 == 0.0);
  CHECK(out.sigma2_1 == 0.0);
  CHECK(out.c_h0 == rc.c_h0);
  CHECK(out.c_h1 == rc.c_h1);
}

TEST_CASE("constant propagation: omega = 0 leaves the bundle unchanged") {
  RegimeConstants rc;
  rc.c_h1 = 1.0;
  rc.sigma2_0 = 0.4;
  const RegimeConstants out = propagate_constants(profile_for(IdentityOp{}, 3),
                                                  CompressionPlacement::field, rc, {});
  CHECK(out.sigma2_0 == doctest::Approx(rc.sigma2_0));
  CHECK(out.sigma2_1 == doctest::Approx(rc.sigma2_1));
  CHECK(out.tau0 == rc.tau0);
  CHECK(out.tau1 == rc.tau1);
}

TEST_CASE("constant propagation: low-precision variance inflation formula") {
  RegimeConstants rc;
  rc.c_h0 = 0.5;
  rc.c_h1 = 1.0;
  rc.sigma2_0 = 0.3;
  rc.sigma2_1 = 0.2;
  rc.tau0 = 0.01;
  const Eigen::Index d = 9;
  const double gamma_bar = 0.4, delta = 0.05;
  PropagationExtras extras;
  extras.gamma_bar = gamma_bar;
  extras.dim = d;
  const RegimeConstants out = propagate_constants(profile_for(StochasticRoundOp{delta}, d),
                                                  CompressionPlacement::lowprec, rc, extras);
  const double ratio = delta * 3.0 / (2.0 * gamma_bar);  // sqrt(9) = 3
  CHECK(out.sigma2_0 - rc.sigma2_0 ==
        doctest::Approx(ratio * (3.0 + rc.tau0 + rc.c_h0 + rc.sigma2_0)));
  CHECK(out.sigma2_1 - rc.sigma2_1 ==
        doctest::Approx(ratio * (rc.tau1 + rc.c_h1 + rc.sigma2_1)));
  CHECK(out.tau0 == rc.tau0);
  CHECK(out.c_h0 == rc.c_h0);
}

TEST_CASE("constant propagation: STE bias and variance terms") {
  RegimeConstants rc;
  rc.c_h1 = 1.0;
  rc.sigma2_0 = 0.25;
  const double lip = 1.5;
  const Eigen::Index d = 4;
  const double delta = 0.1;
  PropagationExtras extras;
  extras.lip_h = lip;
  extras.lip_cond_mean = lip;
  const RegimeConstants out = propagate_constants(profile_for(DeterministicRoundOp{delta}, d),
                                                  CompressionPlacement::perturbed, rc, extras);
  const double kappa = d * delta * delta;
  CHECK(out.tau0 == doctest::Approx(lip * lip * kappa));
  CHECK(out.sigma2_0 == doctest::Approx(rc.sigma2_0 + lip * lip * kappa));
  CHECK(out.tau1 == 0.0);
  CHECK(out.sigma2_1 == 0.0);
}

TEST_CASE("compressed-field bias stays within the propagated envelope pointwise") {
  // Deterministic inner gradient field + top-1: bias^2 = ||C(h) - h||^2 must
  // sit under tau1;C * W with tau1;C = 1 - 1/d, exactly, no Monte Carlo.
  const Eigen::Index d = 6;
  Matrix q = Matrix::Identity(d, d);
  for (Eigen::Index i = 0; i < d; ++i) q(i, i) = 0.5 + 0.25 * static_cast<double>(i);
  const FunctionField inner = gradient_field(q, ParamVec::Zero(d));
  const auto wrapped = wrap_compressed_field(inner, TopHOp{1});
  Rng rng(16);
  const double tau1_c = 1.0 - 1.0 / static_cast<double>(d);
  for (int pt = 0; pt < 100; ++pt) {
    ParamVec w(d);
    for (Eigen::Index i = 0; i < d; ++i) w[i] = 4.0 * rng.uniform() - 2.0;
    const ParamVec h = inner.mean_field(w);
    const ParamVec hc = wrapped->sample(w, rng);
    CHECK((hc - h).squaredNorm() <= tau1_c * inner.lyapunov_w(w) + 1e-12);
  }
}

TEST_CASE("operator profiles carry exactly the advertised certificates") {
  const Eigen::Index d = 8;
  const auto top = profile_for(TopHOp{2}, d);
  CHECK(top.contractive_delta == 0.25);
  CHECK_FALSE(top.unbiased_omega.has_value());

  const auto rand_plain = profile_for(RandHOp{2, false}, d);
  CHECK(rand_plain.contractive_delta == 0.25);
  CHECK_FALSE(rand_plain.unbiased_omega.has_value());

  const auto rand_scaled = profile_for(RandHOp{2, true}, d);
  CHECK_FALSE(rand_scaled.contractive_delta.has_value());
  CHECK(rand_scaled.unbiased_omega == 3.0);  // d/h - 1

  const auto dround = profile_for(DeterministicRoundOp{0.5}, d);
  CHECK(dround.uniform_kappa == doctest::Approx(8.0 * 0.25));  // d delta^2
  CHECK_FALSE(dround.linear_delta.has_value());

  const auto sround = profile_for(StochasticRoundOp{0.5}, d);
  CHECK(sround.linear_delta == 0.5);
  CHECK_FALSE(sround.contractive_delta.has_value());
}

TEST_CASE("operator spec strings round-trip") {
  for (const std::string spec :
       {"identity", "top:3", "rand:2", "rand:2:scaled", "sround:0.125000", "dround:0.250000"}) {
    CHECK(format_compression_op(parse_compression_op(spec)) == spec);
  }
  CHECK_THROWS_AS(parse_compression_op("top"), SaError);
  CHECK_THROWS_AS(parse_compression_op("nope:1"), SaError);
}
