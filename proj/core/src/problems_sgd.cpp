#include "sa/problems/sgd.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace sa {

namespace {

Matrix random_psd(Eigen::Index dim, double ev_min, double ev_max, Rng& rng) {
  // Random orthogonal basis from QR of a Gaussian matrix, eigenvalues
  // uniform in [ev_min, ev_max].
  Matrix g(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix orth = qr.householderQ();
  ParamVec evs(dim);
  for (Eigen::Index i = 0; i < dim; ++i) evs[i] = ev_min + (ev_max - ev_min) * rng.uniform();
  return orth * evs.asDiagonal() * orth.transpose();
}

}  // namespace

FiniteSumProblem::FiniteSumProblem(std::vector<Matrix> q, std::vector<ParamVec> b)
    : q_(std::move(q)), b_(std::move(b)) {
  if (q_.empty() || q_.size() != b_.size()) throw EmptyProblemError("need n >= 1 components");
  dim_ = q_.front().rows();
  for (std::size_t i = 0; i < q_.size(); ++i) {
    if (q_[i].rows() != dim_ || q_[i].cols() != dim_ || b_[i].size() != dim_)
      throw DimensionMismatchError("component dimension mismatch");
    if ((q_[i] - q_[i].transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + q_[i].cwiseAbs().maxCoeff()))
      throw SaError("Q_i must be symmetric");
  }
  q_mean_ = Matrix::Zero(dim_, dim_);
  b_mean_ = ParamVec::Zero(dim_);
  for (std::size_t i = 0; i < q_.size(); ++i) {
    q_mean_ += q_[i];
    b_mean_ += b_[i];
  }
  q_mean_ /= static_cast<double>(q_.size());
  b_mean_ /= static_cast<double>(q_.size());

  lip_i_.resize(q_.size());
  shared_q_ = true;
  for (std::size_t i = 0; i < q_.size(); ++i) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(q_[i], Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    if (lo < -1e-10) throw SaError("Q_i must be positive semi-definite");
    lip_i_[i] = es.eigenvalues().maxCoeff();
    if ((q_[i] - q_.front()).cwiseAbs().maxCoeff() > 1e-12) shared_q_ = false;
  }
  lip_mean_ = 0.0;
  for (double l : lip_i_) lip_mean_ += l;
  lip_mean_ /= static_cast<double>(lip_i_.size());

  Eigen::SelfAdjointEigenSolver<Matrix> es(q_mean_, Eigen::EigenvaluesOnly);
  lip_grad_ = es.eigenvalues().maxCoeff();
  mu_ = es.eigenvalues().minCoeff();

  // Root of grad F when the normal equations are consistent.
  Eigen::FullPivLU<Matrix> lu(q_mean_);
  if (lu.isInvertible()) {
    w_star_ = lu.solve(b_mean_);
  } else {
    ParamVec cand = q_mean_.completeOrthogonalDecomposition().solve(b_mean_);
    if ((q_mean_ * cand - b_mean_).norm() <= 1e-9 * (1.0 + b_mean_.norm())) w_star_ = cand;
  }
}

FiniteSumProblem FiniteSumProblem::random_shared_q(std::size_t n, Eigen::Index dim, std::uint64_t seed,
                                                   double mu_min, double mu_max, double b_scale) {
  Rng rng(seed);
  Matrix q = random_psd(dim, mu_min, mu_max, rng);
  std::vector<Matrix> qs(n, q);
  std::vector<ParamVec> bs(n);
  for (std::size_t i = 0; i < n; ++i) {
    bs[i] = ParamVec(dim);
    for (Eigen::Index j = 0; j < dim; ++j) bs[i][j] = b_scale * rng.normal();
  }
  return FiniteSumProblem(std::move(qs), std::move(bs));
}

FiniteSumProblem FiniteSumProblem::random_distinct_q(std::size_t n, Eigen::Index dim,
                                                     std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Matrix> qs(n);
  std::vector<ParamVec> bs(n);
  for (std::size_t i = 0; i < n; ++i) {
    qs[i] = random_psd(dim, 0.2, 2.0, rng);
    bs[i] = ParamVec(dim);
    for (Eigen::Index j = 0; j < dim; ++j) bs[i][j] = rng.normal();
  }
  return FiniteSumProblem(std::move(qs), std::move(bs));
}

ParamVec FiniteSumProblem::component_gradient(std::size_t i, const ParamVec& w) const {
  return q_[i] * w - b_[i];
}

ParamVec FiniteSumProblem::full_gradient(const ParamVec& w) const { return q_mean_ * w - b_mean_; }

double FiniteSumProblem::objective(const ParamVec& w) const {
  return 0.5 * w.dot(q_mean_ * w) - b_mean_.dot(w);
}

double FiniteSumProblem::dispersion() const {
  if (!shared_q_) throw RegimeUnavailableError("M is finite only when all Q_i coincide");
  double m = 0.0;
  for (std::size_t i = 0; i < b_.size(); ++i) m = std::max(m, (b_[i] - b_mean_).norm());
  return m;
}

double FiniteSumProblem::objective_min() const {
  if (!w_star_) throw RegimeUnavailableError("minimizer unknown (grad F has no root)");
  return objective(*w_star_);
}

ParamVec FiniteSumProblem::sgd_field(const ParamVec& w, const MinibatchSpec& batch, Rng& rng) const {
  if (w.size() != dim_) throw DimensionMismatchError("w dimension mismatch");
  if (batch.size < 1 || batch.size > size()) throw BatchTooLargeError("need 1 <= b <= n");
  const auto idx = batch.with_replacement ? rng.sample_with_replacement(size(), batch.size)
                                          : rng.sample_without_replacement(size(), batch.size);
  ParamVec acc = ParamVec::Zero(dim_);
  for (std::size_t i : idx) acc -= component_gradient(i, w);
  return acc / static_cast<double>(batch.size);
}

RegimeConstants FiniteSumProblem::sgd_constants(SgdRegime regime, std::size_t batch) const {
  if (batch < 1 || batch > size()) throw BatchTooLargeError("need 1 <= batch <= n");
  RegimeConstants rc;
  const double m = dispersion();  // all four rows assume bounded dispersion
  const double n = static_cast<double>(batch);
  switch (regime) {
    case SgdRegime::nonconvex:
      rc.c_h0 = 0.0;
      rc.c_h1 = 1.0;
      rc.sigma2_0 = m * m / n;
      rc.sigma2_1 = 0.0;
      rc.lyap_smoothness = lip_grad_;
      rc.rho = 1.0;
      rc.c_lyap = 1.0;
      rc.v_star = objective_min();
      break;
    case SgdRegime::convex:
      if (!w_star_) throw RegimeUnavailableError("convex regime needs a known minimizer");
      rc.c_h0 = 0.0;
      rc.c_h1 = lip_grad_;
      rc.sigma2_0 = m * m / n;
      rc.lyap_smoothness = 1.0;
      rc.rho = 1.0;
      rc.c_lyap = std::numeric_limits<double>::infinity();
      rc.v_star = 0.0;
      break;
    case SgdRegime::strongly_convex:
      if (!(mu_ > 0.0)) throw RegimeUnavailableError("strong convexity requires mu > 0");
      rc.c_h0 = 0.0;
      rc.c_h1 = lip_grad_;
      rc.sigma2_0 = m * m / n;
      rc.lyap_smoothness = 1.0;
      rc.rho = 1.0;
      rc.c_lyap = 1.0 / std::sqrt(mu_);
      rc.v_star = 0.0;
      break;
    case SgdRegime::strongly_convex_vw:
      if (!(mu_ > 0.0)) throw RegimeUnavailableError("strong convexity requires mu > 0");
      rc.c_h0 = 0.0;
      rc.c_h1 = 2.0 * lip_grad_ * lip_grad_;
      rc.sigma2_0 = m * m / n;
      rc.lyap_smoothness = 1.0;
      rc.rho = 2.0 * mu_;
      rc.c_lyap = std::sqrt(2.0);
      rc.v_star = 0.0;
      break;
  }
  return rc;
}

double FiniteSumProblem::lyapunov_v(SgdRegime regime, const ParamVec& w) const {
  switch (regime) {
    case SgdRegime::nonconvex:
      return objective(w);
    default:
      if (!w_star_) throw RegimeUnavailableError("regime needs a known minimizer");
      return 0.5 * (w - *w_star_).squaredNorm();
  }
}

double FiniteSumProblem::lyapunov_w(SgdRegime regime, const ParamVec& w) const {
  switch (regime) {
    case SgdRegime::nonconvex:
      return full_gradient(w).squaredNorm();
    case SgdRegime::convex:
    case SgdRegime::strongly_convex:
      if (!w_star_) throw RegimeUnavailableError("regime needs a known minimizer");
      return full_gradient(w).dot(w - *w_star_);
    case SgdRegime::strongly_convex_vw:
      if (!w_star_) throw RegimeUnavailableError("regime needs a known minimizer");
      return 0.5 * (w - *w_star_).squaredNorm();
  }
  return 0.0;
}

SgdRegime sgd_regime_from_string(const std::string& name) {
  if (name == "nonconvex") return SgdRegime::nonconvex;
  if (name == "convex") return SgdRegime::convex;
  if (name == "strongly_convex") return SgdRegime::strongly_convex;
  if (name == "strongly_convex_vw") return SgdRegime::strongly_convex_vw;
  throw SaError("unknown sgd regime: " + name);
}

const char* to_string(SgdRegime regime) {
  switch (regime) {
    case SgdRegime::nonconvex:
      return "nonconvex";
    case SgdRegime::convex:
      return "convex";
    case SgdRegime::strongly_convex:
      return "strongly_convex";
    case SgdRegime::strongly_convex_vw:
      return "strongly_convex_vw";
  }
  return "?";
}

}  // namespace sa
