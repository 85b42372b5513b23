#include "sa/constants.hpp"

#include <cmath>

namespace sa {

void validate(const RegimeConstants& rc) {
  auto nonneg = [](double x, const char* name) {
    if (!(x >= 0.0)) throw SaError(std::string(name) + " must be >= 0");
  };
  nonneg(rc.c_h0, "c_h0");
  nonneg(rc.c_h1, "c_h1");
  nonneg(rc.tau0, "tau0");
  nonneg(rc.tau1, "tau1");
  nonneg(rc.sigma2_0, "sigma2_0");
  nonneg(rc.sigma2_1, "sigma2_1");
  if (!(rc.lyap_smoothness > 0.0)) throw SaError("lyap_smoothness must be > 0");
  if (!(rc.rho > 0.0)) throw SaError("rho must be > 0");
  if (!(rc.c_lyap > 0.0)) throw SaError("c_lyap must be > 0");
  if (std::isinf(rc.c_lyap) && !rc.unbiased())
    throw InfiniteCvWithBiasError("c_lyap = inf requires tau0 = tau1 = 0");
}

DerivedConstants derive_constants(const RegimeConstants& rc, double vbar) {
  validate(rc);
  if (vbar < 0.0) throw SaError("vbar must be >= 0");

  DerivedConstants dc;
  const double st0 = std::sqrt(rc.tau0);
  const double st1 = std::sqrt(rc.tau1);
  dc.b0 = 0.5 * mul0(rc.c_lyap, st0);
  dc.b1 = mul0(rc.c_lyap, 0.5 * st0 + st1);
  if (dc.b1 >= rc.rho) throw BiasTooLargeError("b1 >= rho: oracle bias too large for the drift");

  const double sc0 = std::sqrt(rc.c_h0);
  const double sc1 = std::sqrt(rc.c_h1);
  dc.eta0 = rc.sigma2_0 + rc.tau0 + rc.c_h0 + sc0 * (st0 + st1) + st0 * (sc0 + sc1);
  dc.eta1 = rc.sigma2_1 + rc.tau1 + rc.c_h1 + sc1 * (st0 + st1) + st1 * (sc0 + sc1);

  dc.gamma_max = dc.eta1 == 0.0
                     ? MaxStep::unbounded()
                     : MaxStep::bounded(2.0 * (rc.rho - dc.b1) / (rc.lyap_smoothness * dc.eta1));
  dc.bias_floor = 2.0 * dc.b0 / (rc.rho - dc.b1);
  dc.vbar = vbar;
  return dc;
}

double omega(const RegimeConstants& rc, const DerivedConstants& dc, double gamma) {
  return 2.0 * (rc.rho - dc.b1) - gamma * rc.lyap_smoothness * dc.eta1;
}

EpsilonBudget epsilon_budget(const DerivedConstants& dc, const RegimeConstants& rc, double eps) {
  if (!rc.unbiased()) throw BiasedOracleError("epsilon budget requires an unbiased oracle");
  if (!(eps > 0.0)) throw EpsilonOutOfRangeError("eps must be > 0");

  const double rho = rc.rho;
  const double lv = rc.lyap_smoothness;
  const double t_noise = 8.0 * dc.vbar * dc.eta0 * lv / (eps * eps * rho * rho);
  const double t_init =
      dc.gamma_max.is_unbounded() ? 0.0 : 8.0 * dc.vbar / (dc.gamma_max.value() * eps * rho);

  EpsilonBudget out;
  // High precision iff eps <= 2 eta0 / eta1 (always, when eta1 = 0).
  const bool high = dc.eta1 == 0.0 || eps <= 2.0 * dc.eta0 / dc.eta1;
  out.regime = high ? PrecisionRegime::high : PrecisionRegime::low;
  out.iterations = static_cast<std::int64_t>(std::ceil(std::max({t_noise, t_init, 1.0})));
  if (high) {
    out.gamma = dc.eta0 > 0.0 ? rho * eps / (2.0 * dc.eta0 * lv)
                              : dc.gamma_max.min_with(rho * eps / (2.0 * lv));  // eta0 = 0: any admissible step
    out.gamma = dc.gamma_max.is_unbounded() ? out.gamma : std::min(out.gamma, dc.gamma_max.value() / 2.0);
  } else {
    out.gamma = dc.gamma_max.value() / 2.0;
  }
  return out;
}

const char* to_string(PrecisionRegime r) { return r == PrecisionRegime::high ? "high" : "low"; }

}  // namespace sa
