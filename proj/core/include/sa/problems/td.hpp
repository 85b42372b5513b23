#pragma once

#include <utility>

#include "sa/constants.hpp"
#include "sa/field.hpp"
#include "sa/types.hpp"

namespace sa {

// Finite Markov reward process (P, R, lambda) with |R(s,s')| <= 1 and an
// irreducible transition matrix; the stationary distribution is computed and
// cached at construction.
class Mrp {
 public:
  Mrp(Matrix transition, Matrix reward, double lambda);

  // Dirichlet(1) rows mixed with 0.01 * uniform to force irreducibility;
  // rewards uniform in [-1, 1].
  static Mrp random(Eigen::Index states, double lambda, std::uint64_t seed);
  static Mrp constant_reward_chain(Eigen::Index states, double lambda);

  Eigen::Index states() const { return p_.rows(); }
  const Matrix& transition() const { return p_; }
  const Matrix& reward() const { return r_; }
  double lambda() const { return lambda_; }
  const ParamVec& stationary() const { return pi_; }
  const ParamVec& mean_reward() const { return r_bar_; }  // R_bar(s) = sum_s' P(s,s') R(s,s')

  // True value function (I - lambda P)^{-1} R_bar.
  ParamVec value_function() const;

  // (s, s') with s ~ stationary, s' ~ P(s, .), per the replay-buffer sampling
  // model.
  std::pair<Eigen::Index, Eigen::Index> sample_transition(Rng& rng) const;

 private:
  Matrix p_;
  Matrix r_;
  double lambda_;
  ParamVec pi_;
  ParamVec r_bar_;
};

// pi with pi P = pi, sum pi = 1; throws ReducibleError unless P is
// irreducible.
ParamVec stationary_dist(const Matrix& transition);

ParamVec bellman_apply(const Mrp& mrp, const ParamVec& values);

struct TdFeatures {
  Matrix phi;  // n x d, row norms <= 1
  bool full_rank = false;

  static TdFeatures random(const Mrp& mrp, Eigen::Index dim, std::uint64_t seed);
  static TdFeatures tabular(const Mrp& mrp);
};

ParamVec td0_field(const Mrp& mrp, const TdFeatures& features, const ParamVec& w, Eigen::Index s,
                   Eigen::Index s_next);

// h(w) = Phi' D_pi (T Phi w - Phi w), dense algebra.
ParamVec td_mean_field(const Mrp& mrp, const TdFeatures& features, const ParamVec& w);

// Unique root of h under full-rank features; residual <= 1e-10 checked.
ParamVec solve_fixed_point(const Mrp& mrp, const TdFeatures& features);

// Standard bundle: V = 1/2 ||w - w*||^2, W = ||Phi(w - w*)||^2_{D_pi}.
RegimeConstants td_constants(const Mrp& mrp, const TdFeatures& features);

// V = W = 1/2 ||w - w*||^2 reparameterization used by the fast-rate corollary:
// rho = 2 sqrt(v_min) (1 - lambda), c_h1 = 2 (1 + lambda)^2.
RegimeConstants td_constants_vw(const Mrp& mrp, const TdFeatures& features);

// Minimal eigenvalue of the feature covariance Phi' D_pi Phi.
double feature_covariance_vmin(const Mrp& mrp, const TdFeatures& features);

class TdFieldOracle final : public FieldOracle {
 public:
  TdFieldOracle(const Mrp& mrp, const TdFeatures& features);

  Eigen::Index dim() const override { return features_.phi.cols(); }
  ParamVec sample(const ParamVec& w, Rng& rng) const override;
  ParamVec mean_field(const ParamVec& w) const override { return td_mean_field(mrp_, features_, w); }
  double lyapunov_v(const ParamVec& w) const override { return 0.5 * (w - w_star_).squaredNorm(); }
  double lyapunov_w(const ParamVec& w) const override {
    const ParamVec d = w - w_star_;
    return d.dot(sigma_pi_ * d);
  }

  const ParamVec& fixed_point() const { return w_star_; }
  const Matrix& feature_covariance() const { return sigma_pi_; }

 private:
  const Mrp& mrp_;
  const TdFeatures& features_;
  ParamVec w_star_;
  Matrix sigma_pi_;
};

}  // namespace sa
