#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "glioma/tensor.hpp"

namespace glioma {

struct AdamState {
  std::int64_t step = 0;
  std::vector<Tensor> m;  // first moments, one per parameter
  std::vector<Tensor> v;  // second moments
  float lr = 0.001f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;

  static AdamState for_params(std::span<const Tensor> params, float lr = 0.001f);
};

/// One bias-corrected Adam update using each parameter's accumulated gradient
/// (a parameter without a gradient is treated as having a zero gradient).
/// Constant learning rate and no weight decay.
void adam_step(std::span<Tensor> params, AdamState& state);

}  // namespace glioma
