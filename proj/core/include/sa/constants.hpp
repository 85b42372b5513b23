#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sa/schedule.hpp"
#include "sa/types.hpp"

namespace sa {

// Constant bundle for the oracle/Lyapunov assumptions:
//   ||h(w)||^2                    <= c_h0 + c_h1 * W(w)
//   ||E[H|F] - h(w)||^2           <= tau0 + tau1 * W(w)
//   Var[H|F]                      <= sigma2_0 + sigma2_1 * W(w)
//   <grad V, h>                   <= -rho * W,   ||grad V|| <= c_lyap * sqrt(W)
// c_lyap may be +inf, which requires tau0 = tau1 = 0.
struct RegimeConstants {
  double c_h0 = 0.0;
  double c_h1 = 0.0;
  double tau0 = 0.0;
  double tau1 = 0.0;
  double sigma2_0 = 0.0;
  double sigma2_1 = 0.0;
  double lyap_smoothness = 1.0;  // L_V
  double rho = 1.0;
  double c_lyap = 1.0;  // c_V, possibly +inf
  double v_star = 0.0;

  bool unbiased() const { return tau0 == 0.0 && tau1 == 0.0; }
};

void validate(const RegimeConstants& rc);

// Derived per the descent analysis:
//   b0 = c_V sqrt(tau0)/2,  b1 = c_V (sqrt(tau0)/2 + sqrt(tau1))
//   eta_l = sigma2_l + tau_l + c_hl + sqrt(c_hl)(sqrt(tau0)+sqrt(tau1))
//           + sqrt(tau_l)(sqrt(c_h0)+sqrt(c_h1))
//   gamma_max = 2(rho - b1)/(L_V eta1)      (unbounded when eta1 = 0)
//   bias_floor = 2 b0 / (rho - b1)
struct DerivedConstants {
  double b0 = 0.0;
  double b1 = 0.0;
  double eta0 = 0.0;
  double eta1 = 0.0;
  MaxStep gamma_max = MaxStep::unbounded();
  double bias_floor = 0.0;  // B
  double vbar = 0.0;        // E V(w0) - V_star, supplied by the caller
};

DerivedConstants derive_constants(const RegimeConstants& rc, double vbar = 0.0);

// omega_k = 2(rho - b1) - gamma_k * L_V * eta1; positive for gamma < gamma_max.
double omega(const RegimeConstants& rc, const DerivedConstants& dc, double gamma);

enum class PrecisionRegime { high, low };

struct EpsilonBudget {
  std::int64_t iterations = 0;
  double gamma = 0.0;
  PrecisionRegime regime = PrecisionRegime::high;
};

// Iteration/step budget for E[W(w_R)] <= eps with an unbiased oracle.
EpsilonBudget epsilon_budget(const DerivedConstants& dc, const RegimeConstants& rc, double eps);

const char* to_string(PrecisionRegime r);

}  // namespace sa
