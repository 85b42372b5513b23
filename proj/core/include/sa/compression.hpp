#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>

#include "sa/constants.hpp"
#include "sa/field.hpp"
#include "sa/types.hpp"

namespace sa {

struct IdentityOp {};
struct TopHOp {
  Eigen::Index h;
};
struct RandHOp {
  Eigen::Index h;
  bool scaled = false;
};
struct StochasticRoundOp {
  double delta;
};
struct DeterministicRoundOp {
  double delta;
};

using CompressionOp =
    std::variant<IdentityOp, TopHOp, RandHOp, StochasticRoundOp, DeterministicRoundOp>;

ParamVec compress(const CompressionOp& op, const ParamVec& x, Rng& rng);

bool is_deterministic(const CompressionOp& op);

// Config spec strings: "identity", "top:h", "rand:h", "rand:h:scaled",
// "sround:delta", "dround:delta".
CompressionOp parse_compression_op(const std::string& spec);
std::string format_compression_op(const CompressionOp& op);

// Certificates an operator carries:
//   contractive_delta: E||C(x)-x||^2 <= (1-delta)||x||^2
//   unbiased_omega:    E[C(x)] = x,  E||C(x)-x||^2 <= omega ||x||^2
//   uniform_kappa:     E||C(x)-x||^2 <= kappa
//   linear_delta:      unbiased idempotent lattice quantizer with resolution Delta
struct CompressorProfile {
  std::optional<double> contractive_delta;
  std::optional<double> unbiased_omega;
  std::optional<double> uniform_kappa;
  std::optional<double> linear_delta;
};

CompressorProfile profile_for(const CompressionOp& op, Eigen::Index dim);

enum class CompressionPlacement { field, perturbed, lowprec };

// Free parameters of the constant-propagation lemmas. Unset zetas default to
// +inf when the corresponding multiplied constants vanish and to 1 otherwise,
// matching the instantiations used for the example corollaries.
struct PropagationExtras {
  std::optional<double> zeta;    // perturbed-iterate split
  std::optional<double> zeta1;   // compressed-field splits
  std::optional<double> zeta2;
  std::optional<double> lip_h;         // Lipschitz constant of h (perturbed)
  std::optional<double> lip_cond_mean; // Lipschitz constant of E[H(., X) | F]
  std::optional<double> gamma_bar;     // constant step (low precision)
  std::optional<Eigen::Index> dim;     // ambient dimension (low precision)
  // Both the inner field and the operator are deterministic; the compressed
  // field then has zero conditional variance, which the generic bound does
  // not see.
  bool deterministic_pair = false;
};

RegimeConstants propagate_constants(const CompressorProfile& profile, CompressionPlacement placement,
                                    const RegimeConstants& rc, const PropagationExtras& extras = {});

// C(H(w, X), U): compression applied to the random field. Reports the inner
// mean field for monitoring.
std::unique_ptr<FieldOracle> wrap_compressed_field(const FieldOracle& inner, CompressionOp op);

// H(C(w, U), X): straight-through / perturbed-iterate scheme.
std::unique_ptr<FieldOracle> wrap_perturbed_iterate(const FieldOracle& inner, CompressionOp op);

// (C(w + gamma_bar H(w, X), U) - w) / gamma_bar: low-precision iterates.
// Valid only when run with the constant step gamma_bar.
std::unique_ptr<FieldOracle> wrap_low_precision(const FieldOracle& inner, CompressionOp op,
                                                double gamma_bar);

}  // namespace sa
