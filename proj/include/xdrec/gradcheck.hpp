#pragma once

#include "xdrec/training.hpp"

#include <functional>
#include <string>
#include <vector>

namespace xdrec {

struct TensorCheck {
  std::string objective;  // e.g. "pretrain.contrastive"
  std::string name;
  double rel_error = 0.0;
  Index entries = 0;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double tolerance = 1e-4;

  double worst() const;
  bool pass() const { return worst() <= tolerance; }
  std::string to_json() const;
};

/// Error of one tensor: max |analytic - numeric| over its entries, divided by
/// the larger of the two gradients' max-norms (floored at `floor`). The floor
/// matters only for gradients that vanish identically, such as attention key
/// biases, where central differences return pure roundoff (~1e-10 here).
double relative_error(const Matrix& analytic, const Matrix& numeric, double floor = 1e-5);

/// Central differences of `loss` w.r.t. every tensor of `model` not in
/// `frozen`, compared with `analytic`.
std::vector<TensorCheck> check_tensors(Model& model, const FreezeMask& frozen, const Gradients& analytic,
                                       const std::function<double(const Model&)>& loss, double step,
                                       const std::string& objective);

struct GradCheckOptions {
  std::uint64_t seed = 1;
  double step = 1e-5;
  double tolerance = 1e-4;
  PromptConfig prompt;  // variant toggles
  bool normalize_similarity = true;
  std::vector<LossKind> losses{LossKind::Contrastive};
};

/// Both stage objectives on the canonical tiny fixture: d_V=8, one layer,
/// two heads, d_W=2, batch of 3, dropout 0, random parameters.
GradCheckReport gradient_check(const GradCheckOptions& opts);

}  // namespace xdrec
