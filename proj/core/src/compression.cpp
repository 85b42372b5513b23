#include "sa/compression.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sa {

namespace {

ParamVec top_h(const ParamVec& x, Eigen::Index h) {
  const Eigen::Index d = x.size();
  if (h < 1 || h > d) throw SaError("top-h needs 1 <= h <= d");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(d));
  std::iota(idx.begin(), idx.end(), 0);
  // Largest magnitudes first; ties go to the lowest index for determinism.
  std::stable_sort(idx.begin(), idx.end(), [&x](Eigen::Index a, Eigen::Index b) {
    return std::abs(x[a]) > std::abs(x[b]);
  });
  ParamVec out = ParamVec::Zero(d);
  for (Eigen::Index i = 0; i < h; ++i) out[idx[static_cast<std::size_t>(i)]] = x[idx[static_cast<std::size_t>(i)]];
  return out;
}

ParamVec rand_h(const ParamVec& x, Eigen::Index h, bool scaled, Rng& rng) {
  const Eigen::Index d = x.size();
  if (h < 1 || h > d) throw SaError("rand-h needs 1 <= h <= d");
  const auto keep = rng.sample_without_replacement(static_cast<std::size_t>(d),
                                                   static_cast<std::size_t>(h));
  ParamVec out = ParamVec::Zero(d);
  const double scale = scaled ? static_cast<double>(d) / static_cast<double>(h) : 1.0;
  for (std::size_t i : keep) out[static_cast<Eigen::Index>(i)] = scale * x[static_cast<Eigen::Index>(i)];
  return out;
}

double det_round(double x, double delta) {
  return std::copysign(delta * std::floor(std::abs(x) / delta + 0.5), x);
}

double stoch_round(double x, double delta, Rng& rng) {
  const double q = x / delta;
  const double lo = std::floor(q);
  const double frac = q - lo;
  if (frac == 0.0) return x;  // lattice points are fixed points, no draw
  return delta * (rng.uniform() <= frac ? lo + 1.0 : lo);
}

}  // namespace

ParamVec compress(const CompressionOp& op, const ParamVec& x, Rng& rng) {
  return std::visit(
      [&](const auto& o) -> ParamVec {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, IdentityOp>) {
          return x;
        } else if constexpr (std::is_same_v<T, TopHOp>) {
          return top_h(x, o.h);
        } else if constexpr (std::is_same_v<T, RandHOp>) {
          return rand_h(x, o.h, o.scaled, rng);
        } else if constexpr (std::is_same_v<T, StochasticRoundOp>) {
          if (!(o.delta > 0.0)) throw SaError("sround needs delta > 0");
          ParamVec out(x.size());
          for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = stoch_round(x[i], o.delta, rng);
          return out;
        } else {
          if (!(o.delta > 0.0)) throw SaError("dround needs delta > 0");
          ParamVec out(x.size());
          for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = det_round(x[i], o.delta);
          return out;
        }
      },
      op);
}

bool is_deterministic(const CompressionOp& op) {
  return std::holds_alternative<IdentityOp>(op) || std::holds_alternative<TopHOp>(op) ||
         std::holds_alternative<DeterministicRoundOp>(op);
}

CompressionOp parse_compression_op(const std::string& spec) {
  auto split = [](const std::string& s) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
      const auto pos = s.find(':', start);
      parts.push_back(s.substr(start, pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    return parts;
  };
  const auto parts = split(spec);
  const std::string& kind = parts[0];
  try {
    if (kind == "identity" && parts.size() == 1) return IdentityOp{};
    if (kind == "top" && parts.size() == 2) return TopHOp{std::stol(parts[1])};
    if (kind == "rand" && (parts.size() == 2 || parts.size() == 3)) {
      const bool scaled = parts.size() == 3 && parts[2] == "scaled";
      if (parts.size() == 3 && !scaled) throw SaError("bad rand suffix");
      return RandHOp{std::stol(parts[1]), scaled};
    }
    if (kind == "sround" && parts.size() == 2) return StochasticRoundOp{std::stod(parts[1])};
    if (kind == "dround" && parts.size() == 2) return DeterministicRoundOp{std::stod(parts[1])};
  } catch (const std::invalid_argument&) {
    throw SaError("bad compressor spec: " + spec);
  }
  throw SaError("bad compressor spec: " + spec);
}

std::string format_compression_op(const CompressionOp& op) {
  return std::visit(
      [](const auto& o) -> std::string {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, IdentityOp>) return "identity";
        else if constexpr (std::is_same_v<T, TopHOp>) return "top:" + std::to_string(o.h);
        else if constexpr (std::is_same_v<T, RandHOp>)
          return "rand:" + std::to_string(o.h) + (o.scaled ? ":scaled" : "");
        else if constexpr (std::is_same_v<T, StochasticRoundOp>)
          return "sround:" + std::to_string(o.delta);
        else
          return "dround:" + std::to_string(o.delta);
      },
      op);
}

CompressorProfile profile_for(const CompressionOp& op, Eigen::Index dim) {
  const double d = static_cast<double>(dim);
  CompressorProfile p;
  std::visit(
      [&](const auto& o) {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, IdentityOp>) {
          p.contractive_delta = 1.0;
          p.unbiased_omega = 0.0;
          p.uniform_kappa = 0.0;
          p.linear_delta = 0.0;
        } else if constexpr (std::is_same_v<T, TopHOp>) {
          p.contractive_delta = static_cast<double>(o.h) / d;
        } else if constexpr (std::is_same_v<T, RandHOp>) {
          if (o.scaled)
            p.unbiased_omega = d / static_cast<double>(o.h) - 1.0;
          else
            p.contractive_delta = static_cast<double>(o.h) / d;
        } else if constexpr (std::is_same_v<T, StochasticRoundOp>) {
          p.linear_delta = o.delta;
        } else {
          p.uniform_kappa = d * o.delta * o.delta;
        }
      },
      op);
  return p;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// (1 + z) * x and (1 + 1/z) * x under the 0 * inf = 0 convention.
double one_plus(double z, double x) { return x == 0.0 ? 0.0 : (1.0 + z) * x; }
double one_plus_inv(double z, double x) {
  if (x == 0.0) return 0.0;
  return z == kInf ? x : (1.0 + 1.0 / z) * x;
}

RegimeConstants propagate_field(const CompressorProfile& profile, const RegimeConstants& rc,
                                const PropagationExtras& extras) {
  RegimeConstants out = rc;
  if (profile.unbiased_omega) {
    // Unbiased relative-variance compression: bias terms unchanged,
    // variance inflated.
    const double om = *profile.unbiased_omega;
    out.sigma2_0 = (1.0 + om) * rc.sigma2_0 + 2.0 * om * (rc.c_h0 + rc.tau0);
    out.sigma2_1 = (1.0 + om) * rc.sigma2_1 + 2.0 * om * (rc.c_h1 + rc.tau1);
    return out;
  }
  if (!profile.contractive_delta) throw HypothesisViolatedError("field placement needs a contractive or unbiased certificate");
  const double one_minus_delta = 1.0 - *profile.contractive_delta;
  const bool inner_clean = rc.tau0 == 0.0 && rc.tau1 == 0.0 && rc.sigma2_0 == 0.0 && rc.sigma2_1 == 0.0;
  if (extras.deterministic_pair && !inner_clean)
    throw HypothesisViolatedError("deterministic_pair requires a deterministic inner field");
  const double z1 = extras.zeta1.value_or(inner_clean ? kInf : 1.0);
  const double z2 = extras.zeta2.value_or(inner_clean ? kInf : 1.0);

  auto tau_c = [&](double tau_l, double ch_l, double s2_l) {
    return (one_plus(z1, tau_l) + one_plus_inv(z1, one_plus(z2, tau_l)) * one_minus_delta) +
           one_plus_inv(z2, one_plus_inv(z1, ch_l)) * one_minus_delta +
           one_plus_inv(z1, s2_l) * one_minus_delta;
  };
  auto sigma_c = [&](double tau_l, double ch_l, double s2_l) {
    return one_minus_delta * (one_plus(z2, tau_l) + one_plus_inv(z2, ch_l)) + one_minus_delta * s2_l;
  };
  out.tau0 = tau_c(rc.tau0, rc.c_h0, rc.sigma2_0);
  out.tau1 = tau_c(rc.tau1, rc.c_h1, rc.sigma2_1);
  if (extras.deterministic_pair) {
    out.sigma2_0 = 0.0;
    out.sigma2_1 = 0.0;
  } else {
    out.sigma2_0 = sigma_c(rc.tau0, rc.c_h0, rc.sigma2_0);
    out.sigma2_1 = sigma_c(rc.tau1, rc.c_h1, rc.sigma2_1);
  }
  if (!std::isfinite(out.tau0) || !std::isfinite(out.tau1) || !std::isfinite(out.sigma2_0) ||
      !std::isfinite(out.sigma2_1))
    throw HypothesisViolatedError("propagated constants are not finite; pick finite zeta1/zeta2");
  return out;
}

RegimeConstants propagate_perturbed(const CompressorProfile& profile, const RegimeConstants& rc,
                                    const PropagationExtras& extras) {
  if (!profile.uniform_kappa) throw HypothesisViolatedError("perturbed placement needs a kappa certificate");
  if (rc.tau1 != 0.0 || rc.sigma2_1 != 0.0)
    throw HypothesisViolatedError("perturbed placement needs tau1 = sigma2_1 = 0");
  if (!extras.lip_h || !extras.lip_cond_mean)
    throw HypothesisViolatedError("perturbed placement needs lip_h and lip_cond_mean");
  const double kappa = *profile.uniform_kappa;
  const double z = extras.zeta.value_or(rc.tau0 == 0.0 ? kInf : 1.0);
  RegimeConstants out = rc;
  out.tau0 = one_plus(z, rc.tau0) + one_plus_inv(z, (*extras.lip_h) * (*extras.lip_h) * kappa);
  out.tau1 = 0.0;
  out.sigma2_0 = rc.sigma2_0 + (*extras.lip_cond_mean) * (*extras.lip_cond_mean) * kappa;
  out.sigma2_1 = 0.0;
  if (!std::isfinite(out.tau0)) throw HypothesisViolatedError("propagated tau0 not finite");
  return out;
}

RegimeConstants propagate_lowprec(const CompressorProfile& profile, const RegimeConstants& rc,
                                  const PropagationExtras& extras) {
  if (!profile.linear_delta) throw HypothesisViolatedError("low-precision placement needs a linear quantizer");
  if (!extras.gamma_bar || !(*extras.gamma_bar > 0.0))
    throw HypothesisViolatedError("low-precision placement needs the constant step gamma_bar");
  if (!extras.dim) throw HypothesisViolatedError("low-precision placement needs the ambient dimension");
  const double ratio =
      *profile.linear_delta * std::sqrt(static_cast<double>(*extras.dim)) / (2.0 * *extras.gamma_bar);
  RegimeConstants out = rc;
  out.sigma2_0 = rc.sigma2_0 + ratio * (3.0 + rc.tau0 + rc.c_h0 + rc.sigma2_0);
  out.sigma2_1 = rc.sigma2_1 + ratio * (rc.tau1 + rc.c_h1 + rc.sigma2_1);
  return out;
}

}  // namespace

RegimeConstants propagate_constants(const CompressorProfile& profile, CompressionPlacement placement,
                                    const RegimeConstants& rc, const PropagationExtras& extras) {
  validate(rc);
  switch (placement) {
    case CompressionPlacement::field:
      return propagate_field(profile, rc, extras);
    case CompressionPlacement::perturbed:
      return propagate_perturbed(profile, rc, extras);
    case CompressionPlacement::lowprec:
      return propagate_lowprec(profile, rc, extras);
  }
  throw SaError("unreachable");
}

namespace {

class CompressedFieldOracle final : public FieldOracle {
 public:
  CompressedFieldOracle(const FieldOracle& inner, CompressionOp op) : inner_(inner), op_(std::move(op)) {}
  Eigen::Index dim() const override { return inner_.dim(); }
  ParamVec sample(const ParamVec& w, Rng& rng) const override {
    return compress(op_, inner_.sample(w, rng), rng);
  }
  ParamVec mean_field(const ParamVec& w) const override { return inner_.mean_field(w); }
  double lyapunov_v(const ParamVec& w) const override { return inner_.lyapunov_v(w); }
  double lyapunov_w(const ParamVec& w) const override { return inner_.lyapunov_w(w); }

 private:
  const FieldOracle& inner_;
  CompressionOp op_;
};

class PerturbedIterateOracle final : public FieldOracle {
 public:
  PerturbedIterateOracle(const FieldOracle& inner, CompressionOp op) : inner_(inner), op_(std::move(op)) {}
  Eigen::Index dim() const override { return inner_.dim(); }
  ParamVec sample(const ParamVec& w, Rng& rng) const override {
    return inner_.sample(compress(op_, w, rng), rng);
  }
  ParamVec mean_field(const ParamVec& w) const override { return inner_.mean_field(w); }
  double lyapunov_v(const ParamVec& w) const override { return inner_.lyapunov_v(w); }
  double lyapunov_w(const ParamVec& w) const override { return inner_.lyapunov_w(w); }

 private:
  const FieldOracle& inner_;
  CompressionOp op_;
};

class LowPrecisionOracle final : public FieldOracle {
 public:
  LowPrecisionOracle(const FieldOracle& inner, CompressionOp op, double gamma_bar)
      : inner_(inner), op_(std::move(op)), gamma_bar_(gamma_bar) {
    if (!(gamma_bar_ > 0.0)) throw SaError("gamma_bar must be > 0");
  }
  Eigen::Index dim() const override { return inner_.dim(); }
  ParamVec sample(const ParamVec& w, Rng& rng) const override {
    const ParamVec step = w + gamma_bar_ * inner_.sample(w, rng);
    return (compress(op_, step, rng) - w) / gamma_bar_;
  }
  ParamVec mean_field(const ParamVec& w) const override { return inner_.mean_field(w); }
  double lyapunov_v(const ParamVec& w) const override { return inner_.lyapunov_v(w); }
  double lyapunov_w(const ParamVec& w) const override { return inner_.lyapunov_w(w); }
  std::optional<double> required_constant_step() const override { return gamma_bar_; }

 private:
  const FieldOracle& inner_;
  CompressionOp op_;
  double gamma_bar_;
};

}  // namespace

std::unique_ptr<FieldOracle> wrap_compressed_field(const FieldOracle& inner, CompressionOp op) {
  return std::make_unique<CompressedFieldOracle>(inner, std::move(op));
}

std::unique_ptr<FieldOracle> wrap_perturbed_iterate(const FieldOracle& inner, CompressionOp op) {
  return std::make_unique<PerturbedIterateOracle>(inner, std::move(op));
}

std::unique_ptr<FieldOracle> wrap_low_precision(const FieldOracle& inner, CompressionOp op,
                                                double gamma_bar) {
  return std::make_unique<LowPrecisionOracle>(inner, std::move(op), gamma_bar);
}

}  // namespace sa
