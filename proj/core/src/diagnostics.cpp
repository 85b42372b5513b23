#include "sa/diagnostics.hpp"

#include <cmath>

namespace sa {

double mean(std::span<const double> xs) {
  double acc = 0.0;
  for (double x : xs) acc += x;
  return acc / static_cast<double>(xs.size());
}

double standard_error(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
}

AssumptionReport certify_assumption_a1(const FieldOracle& field, const RegimeConstants& rc,
                                       const std::vector<ParamVec>& test_points, std::int64_t samples,
                                       Rng& rng) {
  AssumptionReport report;
  report.points.reserve(test_points.size());
  for (const auto& w : test_points) {
    AssumptionPoint pt;
    pt.w = w;
    pt.lyap_w = field.lyapunov_w(w);
    const ParamVec h = field.mean_field(w);

    ParamVec sum = ParamVec::Zero(field.dim());
    std::vector<ParamVec> draws;
    draws.reserve(static_cast<std::size_t>(samples));
    for (std::int64_t j = 0; j < samples; ++j) {
      draws.push_back(field.sample(w, rng));
      sum += draws.back();
    }
    const ParamVec m = sum / static_cast<double>(samples);

    std::vector<double> dev2(draws.size());
    for (std::size_t j = 0; j < draws.size(); ++j) dev2[j] = (draws[j] - m).squaredNorm();
    const double var = mean(dev2) * static_cast<double>(samples) / static_cast<double>(samples - 1);

    pt.measured_bias2 = (m - h).squaredNorm();
    pt.measured_var = var;
    pt.bound_bias2 = rc.tau0 + rc.tau1 * pt.lyap_w;
    pt.bound_var = rc.sigma2_0 + rc.sigma2_1 * pt.lyap_w;

    const double se_mean = std::sqrt(var / static_cast<double>(samples));
    pt.stderr_bias2 = 2.0 * std::sqrt(pt.measured_bias2) * se_mean + se_mean * se_mean;
    pt.stderr_var = standard_error(dev2);
    // deterministic oracles leave only float dust; 1e-10 relative slack
    const double dust = 1e-10 * (1.0 + pt.lyap_w);
    pt.pass = pt.measured_bias2 <= pt.bound_bias2 + 3.0 * pt.stderr_bias2 + dust &&
              pt.measured_var <= pt.bound_var + 3.0 * pt.stderr_var + dust;
    report.points.push_back(std::move(pt));
  }
  return report;
}

DescentCheck robbins_siegmund_check(const FieldOracle& field, const RegimeConstants& rc,
                                    const ParamVec& w, double gamma, std::int64_t samples, Rng& rng,
                                    DescentVariant variant) {
  std::vector<double> values(static_cast<std::size_t>(samples));
  for (auto& v : values) v = field.lyapunov_v(w + gamma * field.sample(w, rng));

  DescentCheck out;
  out.lhs = mean(values);
  out.stderr = standard_error(values);
  const double v_now = field.lyapunov_v(w);
  const double w_now = field.lyapunov_w(w);
  const double lv = rc.lyap_smoothness;
  if (variant == DescentVariant::general) {
    const double st0 = std::sqrt(rc.tau0);
    const double st1 = std::sqrt(rc.tau1);
    const double b0 = 0.5 * mul0(rc.c_lyap, st0);
    const double b1 = mul0(rc.c_lyap, 0.5 * st0 + st1);
    const double eta0 = rc.sigma2_0 + rc.tau0 + rc.c_h0 + std::sqrt(rc.c_h0) * (st0 + st1) +
                        st0 * (std::sqrt(rc.c_h0) + std::sqrt(rc.c_h1));
    const double eta1 = rc.sigma2_1 + rc.tau1 + rc.c_h1 + std::sqrt(rc.c_h1) * (st0 + st1) +
                        st1 * (std::sqrt(rc.c_h0) + std::sqrt(rc.c_h1));
    const double omega_gamma = 2.0 * (rc.rho - b1) - gamma * lv * eta1;
    out.rhs = v_now - 0.5 * gamma * omega_gamma * w_now + gamma * b0 +
              0.5 * gamma * gamma * lv * eta0;
  } else {
    const double omega2 = (rc.rho - rc.tau1) - gamma * lv * rc.sigma2_1;
    out.rhs = v_now - 0.5 * gamma * omega2 * w_now + 0.5 * gamma * rc.tau0 +
              0.5 * gamma * gamma * lv * rc.sigma2_0;
  }
  out.pass = out.lhs <= out.rhs + 3.0 * out.stderr;
  return out;
}

namespace {

RateFit least_squares_loglog(const std::vector<RatePoint>& points) {
  const auto n = static_cast<double>(points.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& p : points) {
    if (!(p.horizon > 0.0) || !(p.value > 0.0)) throw SaError("rate fit needs positive (T, value)");
    const double x = std::log(p.horizon);
    const double y = std::log(p.value);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  RateFit fit;
  const double den = n * sxx - sx * sx;
  if (den == 0.0) throw SaError("rate fit needs distinct horizons");
  fit.slope = (n * sxy - sx * sy) / den;
  fit.intercept = (sy - fit.slope * sx) / n;
  double ss_res = 0.0, ss_tot = 0.0;
  const double ybar = sy / n;
  for (const auto& p : points) {
    const double y = std::log(p.value);
    const double yhat = fit.intercept + fit.slope * std::log(p.horizon);
    ss_res += (y - yhat) * (y - yhat);
    ss_tot += (y - ybar) * (y - ybar);
  }
  fit.r2 = ss_tot == 0.0 ? 1.0 : 1.0 - ss_res / ss_tot;
  return fit;
}

}  // namespace

RateFit fit_rate(const std::vector<RatePoint>& points) {
  if (points.size() < 4) throw SaError("rate fit needs >= 4 points");
  double lo = points.front().horizon, hi = points.front().horizon;
  for (const auto& p : points) {
    lo = std::min(lo, p.horizon);
    hi = std::max(hi, p.horizon);
  }
  if (hi < 100.0 * lo) throw SaError("rate fit needs horizons spanning >= 2 decades");
  RateFit fit = least_squares_loglog(points);
  if (fit.r2 < 0.98) {
    std::vector<RatePoint> tail;
    for (const auto& p : points)
      if (p.horizon >= hi / 10.0) tail.push_back(p);
    if (tail.size() >= 2) {
      fit = least_squares_loglog(tail);
      fit.refit_tail = true;
    }
  }
  return fit;
}

RateFit fit_rate_loose(const std::vector<RatePoint>& points) {
  if (points.size() < 2) throw SaError("rate fit needs >= 2 points");
  return least_squares_loglog(points);
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> curve_running_avg(const BoundInputs& in, std::int64_t horizon) {
  if (static_cast<std::int64_t>(in.gammas.size()) < horizon)
    throw DimensionMismatchError("running_avg needs gamma_1..gamma_T");
  std::vector<double> out(static_cast<std::size_t>(horizon));
  double sum_g2 = 0.0, sum_g = 0.0, sum_gw = 0.0;
  bool admissible = true;  // every step so far below gamma_max
  for (std::int64_t t = 1; t <= horizon; ++t) {
    const double g = in.gammas[static_cast<std::size_t>(t - 1)];
    const double w = omega(in.rc, in.dc, g);
    admissible = admissible && w > 0.0;
    sum_g2 += g * g;
    sum_g += g;
    sum_gw += g * w;
    out[static_cast<std::size_t>(t - 1)] =
        admissible && sum_gw > 0.0
            ? (2.0 * in.dc.vbar + in.rc.lyap_smoothness * in.dc.eta0 * sum_g2 +
               2.0 * in.dc.b0 * sum_g) /
                  sum_gw
            : kInf;
  }
  return out;
}

std::vector<double> curve_tuned_step(const BoundInputs& in, std::int64_t horizon) {
  std::vector<double> out(static_cast<std::size_t>(horizon));
  const double gap = in.rc.rho - in.dc.b1;
  for (std::int64_t t = 1; t <= horizon; ++t) {
    const double noise =
        2.0 * std::sqrt(2.0 * in.dc.vbar * in.dc.eta0 * in.rc.lyap_smoothness) /
        (std::sqrt(static_cast<double>(t)) * gap);
    const double init = in.dc.gamma_max.is_unbounded()
                            ? 0.0
                            : 8.0 * in.dc.vbar / (in.dc.gamma_max.value() * static_cast<double>(t) * gap);
    out[static_cast<std::size_t>(t - 1)] = in.dc.bias_floor + std::max(noise, init);
  }
  return out;
}

std::vector<double> curve_last_recursion(const BoundInputs& in, std::int64_t horizon) {
  if (static_cast<std::int64_t>(in.gammas.size()) < horizon)
    throw DimensionMismatchError("last_recursion needs gamma_1..gamma_T");
  std::vector<double> out(static_cast<std::size_t>(horizon));
  const double gap = in.rc.rho - in.dc.b1;
  double e = in.w0_lyap_w;
  for (std::int64_t t = 1; t <= horizon; ++t) {
    const double g = in.gammas[static_cast<std::size_t>(t - 1)];
    const double lambda = 1.0 - g * gap + 0.5 * g * g * in.rc.lyap_smoothness * in.dc.eta1;
    const double b = g * in.dc.b0 + 0.5 * g * g * in.rc.lyap_smoothness * in.dc.eta0;
    e = lambda * e + b;
    out[static_cast<std::size_t>(t - 1)] = e;
  }
  return out;
}

std::vector<double> curve_poly_last(const BoundInputs& in, std::int64_t horizon) {
  std::vector<double> out(static_cast<std::size_t>(horizon));
  const double gap = in.rc.rho - in.dc.b1;
  if (!(in.gamma_tilde > 0.0) || in.t0 < 0) throw SaError("poly_last needs gamma_tilde > 0 and t0 >= 0");
  for (std::int64_t t = 1; t <= horizon; ++t) {
    const double frac = static_cast<double>(in.t0) / static_cast<double>(t + in.t0);
    out[static_cast<std::size_t>(t - 1)] =
        in.dc.bias_floor + std::pow(frac, in.gamma_tilde * gap / 2.0) * in.w0_lyap_w +
        2.0 * in.rc.lyap_smoothness * in.dc.eta0 * in.gamma_tilde /
            (static_cast<double>(t + in.t0) * gap);
  }
  return out;
}

std::vector<double> curve_td_robust(const BoundInputs& in, std::int64_t horizon) {
  std::vector<double> out(static_cast<std::size_t>(horizon));
  const double lam = in.lambda;
  const double vbar = in.td_w0_w;
  for (std::int64_t t = 1; t <= horizon; ++t) {
    const double a = 2.0 * std::sqrt(12.0 * vbar * (1.0 + 2.0 * in.vstar_norm2_dpi)) /
                     (std::sqrt(static_cast<double>(t)) * (1.0 - lam));
    const double b =
        12.0 * vbar * (1.0 + lam) * (1.0 + lam) / (static_cast<double>(t) * (1.0 - lam) * (1.0 - lam));
    out[static_cast<std::size_t>(t - 1)] = std::max(a, b);
  }
  return out;
}

std::vector<double> curve_td_fast(const BoundInputs& in, std::int64_t horizon) {
  std::vector<double> out(static_cast<std::size_t>(horizon));
  const double lam = in.lambda;
  const double root_vmin = std::sqrt(in.v_min);
  if (!(root_vmin > 0.0)) throw SaError("td_fast needs v_min > 0");
  for (std::int64_t t = 1; t <= horizon; ++t) {
    const double frac = static_cast<double>(in.t0) / static_cast<double>(t + in.t0);
    out[static_cast<std::size_t>(t - 1)] =
        std::pow(frac, in.gamma_tilde * root_vmin * (1.0 - lam)) * in.w0_lyap_w +
        12.0 * in.gamma_tilde * (1.0 + (lam * lam + 1.0) * in.vstar_norm2_dpi) /
            (static_cast<double>(t + in.t0) * root_vmin * (1.0 - lam));
  }
  return out;
}

std::vector<double> curve_vr_tuned(const BoundInputs& in, std::int64_t horizon) {
  std::vector<double> out(static_cast<std::size_t>(horizon));
  if (!(in.gamma_vr > 0.0) || !(in.spider_rho > 0.0)) throw SaError("vr_tuned needs gamma_vr, rho > 0");
  for (std::int64_t t = 1; t <= horizon; ++t) {
    out[static_cast<std::size_t>(t - 1)] =
        4.0 * in.delta1 / (in.gamma_vr * static_cast<double>(t) * in.spider_rho) +
        2.0 * in.gamma_vr * in.c_h0 * in.delta2 / (in.spider_rho * in.spider_rho);
  }
  return out;
}

}  // namespace

std::vector<double> bound_curve(BoundTheorem theorem, const BoundInputs& in, std::int64_t horizon) {
  if (horizon < 1) throw SaError("horizon must be >= 1");
  switch (theorem) {
    case BoundTheorem::running_avg:
      return curve_running_avg(in, horizon);
    case BoundTheorem::tuned_step:
      return curve_tuned_step(in, horizon);
    case BoundTheorem::last_recursion:
      return curve_last_recursion(in, horizon);
    case BoundTheorem::poly_last:
      return curve_poly_last(in, horizon);
    case BoundTheorem::td_robust:
      return curve_td_robust(in, horizon);
    case BoundTheorem::td_fast:
      return curve_td_fast(in, horizon);
    case BoundTheorem::vr_tuned:
      return curve_vr_tuned(in, horizon);
  }
  throw SaError("unreachable");
}

}  // namespace sa
