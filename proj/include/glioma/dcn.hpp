#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "glioma/ops.hpp"
#include "glioma/tensor.hpp"

namespace glioma {

/// Hyperparameters of a densely connected classifier.
struct DcnConfig {
  std::vector<int> block_config;  // dense layers per block
  int growth_rate = 32;
  int init_features = 64;
  int bottleneck_factor = 4;
  float dropout = 0.0f;
  float compression = 0.5f;
  int num_classes = 4;
  int input_size = 224;
  int in_channels = 3;

  // Histology network: blocks [2,2,2,2], k=32, 64 stem filters, RGB input.
  static DcnConfig dcn1();
  // Radiology network: blocks [6,12,36,24], k=24, 48 stem filters, 1-channel input.
  static DcnConfig dcn2();
  static DcnConfig preset(const std::string& name);

  void validate() const;
  bool operator==(const DcnConfig&) const = default;
};

void to_json(nlohmann::json& j, const DcnConfig& c);
void from_json(const nlohmann::json& j, DcnConfig& c);

struct BatchNormLayer {
  Tensor gamma;
  Tensor beta;
  RunningStats stats;

  static BatchNormLayer make(std::int64_t channels);
  Tensor forward(const Tensor& x, bool training);
  Tensor infer(const Tensor& x) const;
};

// BN → ReLU → 1×1 conv (bottleneck) → BN → ReLU → 3×3 conv (growth rate).
struct DenseLayer {
  BatchNormLayer norm1;
  Tensor conv1;  // (bottleneck·k) × c_in × 1 × 1
  BatchNormLayer norm2;
  Tensor conv2;  // k × (bottleneck·k) × 3 × 3

  std::int64_t in_channels() const { return conv1.dim(1); }
  std::int64_t new_features() const { return conv2.dim(0); }
};

struct DenseBlock {
  std::vector<DenseLayer> layers;
};

// BN → ReLU → 1×1 conv (compression) → 2×2 average pool.
struct TransitionLayer {
  BatchNormLayer norm;
  Tensor conv;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Channel bookkeeping read back from the instantiated parameter shapes.
struct BlockChannels {
  std::int64_t in = 0;
  std::int64_t out = 0;
  std::int64_t layers = 0;
  std::int64_t growth = 0;
};

enum class Mode { Train, Eval };

/// Returns the k new feature maps of one dense layer; the caller concatenates
/// them onto `x`.
Tensor dense_layer_forward(const Tensor& x, DenseLayer& layer, bool training);

class DcnModel {
 public:
  /// Stem (7×7/2 conv, BN, ReLU, 3×3/2 max-pool), dense blocks separated by
  /// transitions, final BN/ReLU, global average pool and a linear classifier.
  /// Convolutions use He-normal init, the classifier U(±1/√F) with zero bias.
  static DcnModel build(const DcnConfig& config, std::uint64_t seed);

  const DcnConfig& config() const { return config_; }
  Mode mode() const { return mode_; }
  void set_mode(Mode mode) { mode_ = mode; }

  /// Logits N×num_classes. Train mode uses batch statistics and records the
  /// tape; eval mode is a pure function of parameters and input.
  Tensor forward(const Tensor& batch);
  // Eval-mode forward on a shared model; safe to call from several threads.
  Tensor infer(const Tensor& batch) const;

  std::vector<NamedTensor> parameters() const;
  std::vector<NamedTensor> buffers() const;
  std::vector<Tensor> parameter_tensors() const;
  std::size_t parameter_count() const;
  void zero_grad();

  std::int64_t classifier_width() const { return fc_weight_.dim(0); }
  std::vector<BlockChannels> block_channels() const;

  std::vector<DenseBlock>& blocks() { return blocks_; }

 private:
  void check_input(const Tensor& batch) const;

  DcnConfig config_;
  Mode mode_ = Mode::Train;
  Tensor conv0_;
  BatchNormLayer norm0_;
  std::vector<DenseBlock> blocks_;
  std::vector<TransitionLayer> transitions_;
  BatchNormLayer norm_final_;
  Tensor fc_weight_;  // F × num_classes
  Tensor fc_bias_;
};

}  // namespace glioma
