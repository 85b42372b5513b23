#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "sa/constants.hpp"
#include "sa/field.hpp"
#include "sa/types.hpp"

namespace sa {

enum class SgdRegime { nonconvex, convex, strongly_convex, strongly_convex_vw };

struct MinibatchSpec {
  std::size_t size = 1;
  bool with_replacement = false;
};

// Finite sum of quadratics f_i(w) = 1/2 w'Q_i w - b_i'w. Quadratics keep every
// constant (L_i, mu, M, w_star) exactly computable, so the Table-style
// constant bundles are ground truth rather than estimates.
class FiniteSumProblem {
 public:
  FiniteSumProblem(std::vector<Matrix> q, std::vector<ParamVec> b);

  // Shared Q across components (varying b_i): the only setting with finite
  // gradient dispersion M, hence with sigma2_0 = M^2/n exact.
  static FiniteSumProblem random_shared_q(std::size_t n, Eigen::Index dim, std::uint64_t seed,
                                          double mu_min = 0.5, double mu_max = 2.0,
                                          double b_scale = 1.0);
  static FiniteSumProblem random_distinct_q(std::size_t n, Eigen::Index dim, std::uint64_t seed);

  std::size_t size() const { return q_.size(); }
  Eigen::Index dim() const { return dim_; }
  bool shared_q() const { return shared_q_; }

  ParamVec component_gradient(std::size_t i, const ParamVec& w) const;
  ParamVec full_gradient(const ParamVec& w) const;
  double objective(const ParamVec& w) const;

  double lipschitz_grad() const { return lip_grad_; }        // L_{grad F}
  double component_lipschitz(std::size_t i) const { return lip_i_[i]; }
  double mean_component_lipschitz() const { return lip_mean_; }
  double strong_convexity() const { return mu_; }            // min eigenvalue of mean Q
  double dispersion() const;                                 // M; throws unless shared Q
  const std::optional<ParamVec>& minimizer() const { return w_star_; }
  double objective_min() const;                              // F(w_star)

  // -(1/b) sum_{i in B} grad f_i(w), B uniform with the requested law.
  ParamVec sgd_field(const ParamVec& w, const MinibatchSpec& batch, Rng& rng) const;

  // Constant bundle for a mini-batch oracle of the given size. The variance
  // envelope is sigma2_0 = M^2/batch, valid for sampling with or without
  // replacement; batch = n reproduces the M^2/n bookkeeping used by the
  // tuned-step corollaries.
  RegimeConstants sgd_constants(SgdRegime regime, std::size_t batch = 1) const;
  double lyapunov_v(SgdRegime regime, const ParamVec& w) const;
  double lyapunov_w(SgdRegime regime, const ParamVec& w) const;

 private:
  std::vector<Matrix> q_;
  std::vector<ParamVec> b_;
  Eigen::Index dim_ = 0;
  bool shared_q_ = false;
  Matrix q_mean_;
  ParamVec b_mean_;
  std::vector<double> lip_i_;
  double lip_grad_ = 0.0;
  double lip_mean_ = 0.0;
  double mu_ = 0.0;
  std::optional<ParamVec> w_star_;
};

// SA oracle view of a finite-sum problem under a chosen regime.
class SgdFieldOracle final : public FieldOracle {
 public:
  SgdFieldOracle(const FiniteSumProblem& problem, SgdRegime regime, MinibatchSpec batch)
      : problem_(problem), regime_(regime), batch_(batch) {}

  Eigen::Index dim() const override { return problem_.dim(); }
  ParamVec sample(const ParamVec& w, Rng& rng) const override {
    return problem_.sgd_field(w, batch_, rng);
  }
  ParamVec mean_field(const ParamVec& w) const override { return -problem_.full_gradient(w); }
  double lyapunov_v(const ParamVec& w) const override { return problem_.lyapunov_v(regime_, w); }
  double lyapunov_w(const ParamVec& w) const override { return problem_.lyapunov_w(regime_, w); }

  const FiniteSumProblem& problem() const { return problem_; }

 private:
  const FiniteSumProblem& problem_;
  SgdRegime regime_;
  MinibatchSpec batch_;
};

SgdRegime sgd_regime_from_string(const std::string& name);
const char* to_string(SgdRegime regime);

}  // namespace sa
