#pragma once

#include "xdrec/model.hpp"

#include <map>
#include <string>

namespace xdrec {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::map<std::string, Matrix> first_moment;   // only for tensors that received gradients
  std::map<std::string, Matrix> second_moment;
};

/// One bias-corrected Adam update of every tensor named in `grads`. Tensors
/// without a gradient entry (frozen) are left untouched.
void adam_step(std::vector<TensorRef> params, const Gradients& grads, AdamState& opt, double lr);
void adam_step(Model& model, const Gradients& grads, AdamState& opt, double lr);

}  // namespace xdrec
