#pragma once

#include <span>
#include <vector>

#include "glioma/tensor.hpp"

namespace glioma {

// Differentiable operations on NCHW feature maps. Each records a tape node
// when grad mode is on and any input requires a gradient.

/// 2-D cross-correlation. input N×C×H×W, weight O×C×kH×kW.
/// Output spatial size is floor((H + 2·padding − kH)/stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& weight, int stride = 1, int padding = 0);

// Running statistics are updated in place by training-mode batch norm.
struct RunningStats {
  Tensor mean;
  Tensor var;
  float momentum = 0.1f;

  static RunningStats fresh(std::int64_t channels);
};

inline constexpr float kBatchNormEps = 1e-5f;

/// Per-channel batch normalization. Training mode normalizes with the biased
/// batch variance and folds the unbiased variance into the running estimate.
Tensor batch_norm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                    RunningStats& stats, bool training, float eps = kBatchNormEps);
// Eval-mode batch norm that never touches the running statistics.
Tensor batch_norm2d_inference(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                              const RunningStats& stats, float eps = kBatchNormEps);

Tensor relu(const Tensor& input);

Tensor max_pool2d(const Tensor& input, int kernel, int stride, int padding = 0);
Tensor avg_pool2d(const Tensor& input, int kernel, int stride);
// N×C×H×W → N×C
Tensor global_avg_pool2d(const Tensor& input);

// Concatenate NCHW tensors along the channel axis.
Tensor concat_channels(std::span<const Tensor> inputs);

/// input N×F, weight F×K, bias K → N×K
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

// Row-wise softmax over N×K with max subtraction.
Tensor softmax(const Tensor& logits);

/// Mean over the batch of −log softmax(logits)[label].
Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> labels);

Tensor sum(const Tensor& input);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& input, float factor);
Tensor reshape(const Tensor& input, const Shape& shape);

}  // namespace glioma
