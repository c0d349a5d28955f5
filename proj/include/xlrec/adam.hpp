#pragma once

#include <cstdint>
#include <vector>

#include "xlrec/tensor.hpp"

namespace xlrec {

// Bias-corrected Adam. Moment tensors are kept aligned with the model's
// flat parameter list.
struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  long step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState init(const std::vector<const Tensor*>& params);
};

// One update over all parameters. step_count increments by exactly 1.
// lr < 0 is a ContractError; shape disagreement is a DimensionError.
void adam_step(const std::vector<Tensor*>& params,
               const std::vector<Tensor>& grads, AdamState& state, double lr);

// Scales grads in place so the global L2 norm is at most max_norm.
// No-op when max_norm <= 0 (clipping off).
void clip_grad_norm(std::vector<Tensor>& grads, double max_norm);

}  // namespace xlrec
