#pragma once

#include <memory>
#include <optional>

#include "sa/rng.hpp"
#include "sa/types.hpp"

namespace sa {

// Random-field oracle H(w, X) together with the exact mean field h(w) and the
// Lyapunov pair (V, W) monitored along runs. All problem oracles in this
// toolkit are built on synthetic instances where h, V, W are computable in
// closed form; that is what makes the bound checks exact.
class FieldOracle {
 public:
  virtual ~FieldOracle() = default;

  virtual Eigen::Index dim() const = 0;
  virtual ParamVec sample(const ParamVec& w, Rng& rng) const = 0;
  virtual ParamVec mean_field(const ParamVec& w) const = 0;
  virtual double lyapunov_v(const ParamVec& w) const = 0;
  virtual double lyapunov_w(const ParamVec& w) const = 0;

  // Set by wrappers whose definition is tied to one constant step size.
  virtual std::optional<double> required_constant_step() const { return std::nullopt; }
};

// Adapter for ad-hoc fields (used heavily in tests).
class FunctionField final : public FieldOracle {
 public:
  using Sampler = std::function<ParamVec(const ParamVec&, Rng&)>;
  using Map = std::function<ParamVec(const ParamVec&)>;
  using Scalar = std::function<double(const ParamVec&)>;

  FunctionField(Eigen::Index dim, Sampler sample, Map mean, Scalar v, Scalar w)
      : dim_(dim), sample_(std::move(sample)), mean_(std::move(mean)), v_(std::move(v)), w_(std::move(w)) {}

  // Deterministic field: sample == mean field.
  FunctionField(Eigen::Index dim, Map mean, Scalar v, Scalar w)
      : FunctionField(
            dim, [mean](const ParamVec& x, Rng&) { return mean(x); }, mean, std::move(v), std::move(w)) {}

  Eigen::Index dim() const override { return dim_; }
  ParamVec sample(const ParamVec& w, Rng& rng) const override { return sample_(w, rng); }
  ParamVec mean_field(const ParamVec& w) const override { return mean_(w); }
  double lyapunov_v(const ParamVec& w) const override { return v_(w); }
  double lyapunov_w(const ParamVec& w) const override { return w_(w); }

 private:
  Eigen::Index dim_;
  Sampler sample_;
  Map mean_;
  Scalar v_, w_;
};

}  // namespace sa
