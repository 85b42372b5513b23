#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "sa/constants.hpp"
#include "sa/field.hpp"
#include "sa/schedule.hpp"
#include "sa/types.hpp"

namespace sa {

// Per-point comparison of the sampled conditional bias and variance against
// the certified envelopes tau0 + tau1 W and sigma2_0 + sigma2_1 W.
struct AssumptionPoint {
  ParamVec w;
  double lyap_w = 0.0;
  double measured_bias2 = 0.0;
  double bound_bias2 = 0.0;
  double measured_var = 0.0;
  double bound_var = 0.0;
  double stderr_bias2 = 0.0;
  double stderr_var = 0.0;
  bool pass = false;
};

struct AssumptionReport {
  std::vector<AssumptionPoint> points;
  bool all_pass() const {
    for (const auto& p : points)
      if (!p.pass) return false;
    return true;
  }
};

AssumptionReport certify_assumption_a1(const FieldOracle& field, const RegimeConstants& rc,
                                       const std::vector<ParamVec>& test_points, std::int64_t samples,
                                       Rng& rng);

enum class DescentVariant { general, gradient };

struct DescentCheck {
  double lhs = 0.0;     // Monte-Carlo estimate of E[V(w + gamma H)]
  double rhs = 0.0;     // descent inequality right-hand side
  double stderr = 0.0;  // standard error of lhs
  bool pass = false;    // lhs <= rhs + 3 stderr
};

// One-step descent inequality at a fixed point w. The general variant uses
// the (b0, eta) constants derived from rc; the gradient variant assumes
// grad V = -h and uses the omega_2 = (rho - tau1) - gamma L_V sigma2_1 form.
// The inequality itself does not need b1 < rho, so heavily biased bundles
// are admissible here (the certificate is just loose).
DescentCheck robbins_siegmund_check(const FieldOracle& field, const RegimeConstants& rc,
                                    const ParamVec& w, double gamma, std::int64_t samples, Rng& rng,
                                    DescentVariant variant = DescentVariant::general);

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  bool refit_tail = false;  // transient detected, final decade refit
};

struct RatePoint {
  double horizon;  // T
  double value;
};

// Least squares on (log T, log value); needs >= 4 points spanning >= 2
// decades. If r^2 < 0.98 on the full range the fit is redone on the final
// decade (bounds carry additive initial-condition transients).
RateFit fit_rate(const std::vector<RatePoint>& points);

// Unvalidated log-log least squares, for summaries on short sweeps.
RateFit fit_rate_loose(const std::vector<RatePoint>& points);

enum class BoundTheorem {
  running_avg,     // weighted running average, prefix of the actual steps
  tuned_step,      // horizon-tuned constant step, 1/sqrt(T)
  last_recursion,  // last iterate through the one-step geometric recursion
  poly_last,       // diminishing 1/k steps, last iterate, 1/T
  td_robust,       // TD(0) constant tuned step, averaged, 1/sqrt(T)
  td_fast,         // TD(0) 1/k steps, last iterate, 1/T
  vr_tuned,        // variance-reduced tuned constant step
};

struct BoundInputs {
  RegimeConstants rc;
  DerivedConstants dc;
  std::vector<double> gammas;  // actual steps gamma_1..gamma_T (running_avg, last_recursion)
  double w0_lyap_w = 0.0;      // E W(w_0) (last_recursion, poly_last, td_fast)
  // diminishing-step parameters (poly_last, td_fast)
  double gamma_tilde = 0.0;
  std::int64_t t0 = 0;
  // TD-specific (td_robust, td_fast)
  double lambda = 0.0;
  double vstar_norm2_dpi = 0.0;
  double v_min = 0.0;
  double td_w0_w = 0.0;  // ||V_{w0} - V*||^2_{D_pi}
  // SPIDER-specific (vr_tuned)
  double delta1 = 0.0;
  double delta2 = 0.0;
  double gamma_vr = 0.0;
  double c_h0 = 0.0;
  double spider_rho = 0.0;
};

// Literal right-hand sides of the cited bounds, indexed by horizon
// t = 1..T. running_avg and last_recursion evaluate prefixes of the supplied
// step sequence;
// the corollaries assume their own tuned step at each horizon. Guarded
// divisions return +inf rather than evaluating.
std::vector<double> bound_curve(BoundTheorem theorem, const BoundInputs& in, std::int64_t horizon);

double mean(std::span<const double> xs);
double standard_error(std::span<const double> xs);

}  // namespace sa
