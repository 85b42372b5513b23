#include "sa/problems/td.hpp"

#include <Eigen/Eigenvalues>
#include <vector>

namespace sa {

namespace {

bool strongly_connected(const Matrix& p) {
  const Eigen::Index n = p.rows();
  auto reach = [&](bool transpose) {
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    std::vector<Eigen::Index> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
      const Eigen::Index u = stack.back();
      stack.pop_back();
      for (Eigen::Index v = 0; v < n; ++v) {
        const double w = transpose ? p(v, u) : p(u, v);
        if (w > 0.0 && !seen[static_cast<std::size_t>(v)]) {
          seen[static_cast<std::size_t>(v)] = true;
          stack.push_back(v);
        }
      }
    }
    for (bool s : seen)
      if (!s) return false;
    return true;
  };
  return reach(false) && reach(true);
}

}  // namespace

ParamVec stationary_dist(const Matrix& transition) {
  const Eigen::Index n = transition.rows();
  if (transition.cols() != n || n < 1) throw DimensionMismatchError("transition matrix must be square");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(transition.row(i).sum() - 1.0) > 1e-10) throw SaError("rows must sum to 1");
    if (transition.row(i).minCoeff() < 0.0) throw SaError("transition probabilities must be >= 0");
  }
  if (!strongly_connected(transition)) throw ReducibleError("transition matrix is not irreducible");

  // Solve pi (P - I) = 0 with the normalization replacing one equation.
  Matrix a = transition.transpose() - Matrix::Identity(n, n);
  a.row(n - 1).setOnes();
  ParamVec rhs = ParamVec::Zero(n);
  rhs[n - 1] = 1.0;
  ParamVec pi = a.fullPivLu().solve(rhs);
  if ((transition.transpose() * pi - pi).cwiseAbs().maxCoeff() > 1e-10)
    throw SaError("stationary distribution solve failed");
  if (pi.minCoeff() <= 0.0) throw ReducibleError("stationary distribution has a non-positive mass");
  return pi;
}

Mrp::Mrp(Matrix transition, Matrix reward, double lambda)
    : p_(std::move(transition)), r_(std::move(reward)), lambda_(lambda) {
  if (r_.rows() != p_.rows() || r_.cols() != p_.cols()) throw DimensionMismatchError("reward shape mismatch");
  if (!(lambda_ > 0.0) || !(lambda_ < 1.0)) throw SaError("lambda must be in (0, 1)");
  if (r_.cwiseAbs().maxCoeff() > 1.0 + 1e-12) throw SaError("|R(s, s')| <= 1 required");
  pi_ = stationary_dist(p_);
  r_bar_ = (p_.array() * r_.array()).rowwise().sum();
}

Mrp Mrp::random(Eigen::Index states, double lambda, std::uint64_t seed) {
  Rng rng(seed);
  Matrix p(states, states);
  for (Eigen::Index i = 0; i < states; ++i) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < states; ++j) {
      // Dirichlet(1) row via normalized exponentials.
      const double e = -std::log1p(-rng.uniform());
      p(i, j) = e;
      total += e;
    }
    p.row(i) /= total;
  }
  const double eps = 0.01;
  p = (1.0 - eps) * p + eps * Matrix::Constant(states, states, 1.0 / static_cast<double>(states));
  Matrix r(states, states);
  for (Eigen::Index i = 0; i < states; ++i)
    for (Eigen::Index j = 0; j < states; ++j) r(i, j) = 2.0 * rng.uniform() - 1.0;
  return Mrp(std::move(p), std::move(r), lambda);
}

Mrp Mrp::constant_reward_chain(Eigen::Index states, double lambda) {
  Matrix p = Matrix::Constant(states, states, 1.0 / static_cast<double>(states));
  Matrix r = Matrix::Ones(states, states);
  return Mrp(std::move(p), std::move(r), lambda);
}

ParamVec Mrp::value_function() const {
  const Eigen::Index n = states();
  return (Matrix::Identity(n, n) - lambda_ * p_).fullPivLu().solve(r_bar_);
}

std::pair<Eigen::Index, Eigen::Index> Mrp::sample_transition(Rng& rng) const {
  const auto s = static_cast<Eigen::Index>(
      rng.categorical(std::span<const double>(pi_.data(), static_cast<std::size_t>(pi_.size()))));
  const Eigen::VectorXd row = p_.row(s);
  const auto s_next = static_cast<Eigen::Index>(
      rng.categorical(std::span<const double>(row.data(), static_cast<std::size_t>(row.size()))));
  return {s, s_next};
}

ParamVec bellman_apply(const Mrp& mrp, const ParamVec& values) {
  if (values.size() != mrp.states()) throw DimensionMismatchError("value vector size mismatch");
  return mrp.mean_reward() + mrp.lambda() * (mrp.transition() * values);
}

TdFeatures TdFeatures::random(const Mrp& mrp, Eigen::Index dim, std::uint64_t seed) {
  Rng rng(seed);
  const Eigen::Index n = mrp.states();
  Matrix phi(n, dim);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) phi(i, j) = rng.normal();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = phi.row(i).norm();
    if (norm > 1.0) phi.row(i) /= norm;
  }
  TdFeatures f;
  f.phi = std::move(phi);
  f.full_rank = Eigen::ColPivHouseholderQR<Matrix>(f.phi).rank() == dim;
  return f;
}

TdFeatures TdFeatures::tabular(const Mrp& mrp) {
  TdFeatures f;
  f.phi = Matrix::Identity(mrp.states(), mrp.states());
  f.full_rank = true;
  return f;
}

ParamVec td0_field(const Mrp& mrp, const TdFeatures& features, const ParamVec& w, Eigen::Index s,
                   Eigen::Index s_next) {
  const double td_error = mrp.reward()(s, s_next) + mrp.lambda() * features.phi.row(s_next).dot(w) -
                          features.phi.row(s).dot(w);
  return td_error * features.phi.row(s).transpose();
}

ParamVec td_mean_field(const Mrp& mrp, const TdFeatures& features, const ParamVec& w) {
  const ParamVec values = features.phi * w;
  const ParamVec bellman = bellman_apply(mrp, values);
  return features.phi.transpose() * (mrp.stationary().asDiagonal() * (bellman - values));
}

ParamVec solve_fixed_point(const Mrp& mrp, const TdFeatures& features) {
  if (!features.full_rank) throw RankDeficientError("fixed point needs full-rank features");
  const Matrix d_pi = mrp.stationary().asDiagonal();
  const Matrix a = features.phi.transpose() * d_pi *
                   (mrp.lambda() * mrp.transition() - Matrix::Identity(mrp.states(), mrp.states())) *
                   features.phi;
  const ParamVec rhs = -(features.phi.transpose() * (d_pi * mrp.mean_reward()));
  Eigen::FullPivLU<Matrix> lu(a);
  if (!lu.isInvertible()) throw RankDeficientError("projected Bellman system is singular");
  ParamVec w_star = lu.solve(rhs);
  if (td_mean_field(mrp, features, w_star).norm() > 1e-10 * (1.0 + w_star.norm()))
    throw SaError("projected Bellman solve failed the residual check");
  return w_star;
}

double feature_covariance_vmin(const Mrp& mrp, const TdFeatures& features) {
  const Matrix sigma = features.phi.transpose() * mrp.stationary().asDiagonal() * features.phi;
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

namespace {

double vstar_norm2_dpi(const Mrp& mrp) {
  const ParamVec v = mrp.value_function();
  return v.dot(mrp.stationary().asDiagonal() * v);
}

}  // namespace

RegimeConstants td_constants(const Mrp& mrp, const TdFeatures& features) {
  const double lambda = mrp.lambda();
  const double vmin = feature_covariance_vmin(mrp, features);
  RegimeConstants rc;
  rc.c_h0 = 0.0;
  rc.c_h1 = (1.0 + lambda) * (1.0 + lambda);
  rc.sigma2_0 = 6.0 * (1.0 + (lambda * lambda + 1.0) * vstar_norm2_dpi(mrp));
  rc.sigma2_1 = 2.0 * (1.0 + lambda) * (1.0 + lambda);
  rc.lyap_smoothness = 1.0;
  rc.rho = 1.0 - lambda;
  rc.c_lyap = vmin > 0.0 ? 1.0 / std::sqrt(vmin) : std::numeric_limits<double>::infinity();
  rc.v_star = 0.0;
  return rc;
}

RegimeConstants td_constants_vw(const Mrp& mrp, const TdFeatures& features) {
  if (!features.full_rank) throw RankDeficientError("V = W bundle needs full-rank features");
  const double lambda = mrp.lambda();
  const double vmin = feature_covariance_vmin(mrp, features);
  RegimeConstants rc = td_constants(mrp, features);
  // The value-error norm dominates the parameter norm only through the
  // full eigenvalue: ||x||^2_Sigma >= v_min ||x||^2, so the certified drift
  // is 2 v_min (1 - lambda). A sqrt(v_min)-scaled constant is NOT a valid
  // certificate (counterexamples exist whenever v_min < 1).
  rc.rho = 2.0 * vmin * (1.0 - lambda);
  rc.c_h1 = 2.0 * (1.0 + lambda) * (1.0 + lambda);
  rc.sigma2_1 = 4.0 * (1.0 + lambda) * (1.0 + lambda);
  rc.c_lyap = std::sqrt(2.0);  // ||grad V|| = sqrt(2 V) = sqrt(2 W)
  return rc;
}

TdFieldOracle::TdFieldOracle(const Mrp& mrp, const TdFeatures& features)
    : mrp_(mrp), features_(features) {
  w_star_ = solve_fixed_point(mrp, features);
  sigma_pi_ = features.phi.transpose() * mrp.stationary().asDiagonal() * features.phi;
}

ParamVec TdFieldOracle::sample(const ParamVec& w, Rng& rng) const {
  const auto [s, s_next] = mrp_.sample_transition(rng);
  return td0_field(mrp_, features_, w, s, s_next);
}

}  // namespace sa
