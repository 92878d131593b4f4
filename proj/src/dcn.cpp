#include "glioma/dcn.hpp"

#include <cmath>
#include <random>

#include "glioma/error.hpp"

namespace glioma {

DcnConfig DcnConfig::dcn1() {
  DcnConfig c;
  c.block_config = {2, 2, 2, 2};
  c.growth_rate = 32;
  c.init_features = 64;
  c.bottleneck_factor = 4;
  c.dropout = 0.0f;
  c.compression = 0.5f;
  c.num_classes = 4;
  c.input_size = 224;
  c.in_channels = 3;
  return c;
}

DcnConfig DcnConfig::dcn2() {
  DcnConfig c;
  c.block_config = {6, 12, 36, 24};
  c.growth_rate = 24;
  c.init_features = 48;
  c.bottleneck_factor = 4;
  c.dropout = 0.0f;
  c.compression = 0.5f;
  c.num_classes = 4;
  c.input_size = 224;
  c.in_channels = 1;
  return c;
}

DcnConfig DcnConfig::preset(const std::string& name) {
  if (name == "DCN1" || name == "dcn1") return dcn1();
  if (name == "DCN2" || name == "dcn2") return dcn2();
  fail(ErrorCode::InvalidArgument, "unknown preset '" + name + "' (expected DCN1 or DCN2)");
}

void DcnConfig::validate() const {
  require(!block_config.empty(), ErrorCode::InvalidArgument, "DcnConfig: no dense blocks");
  for (std::size_t i = 0; i < block_config.size(); ++i)
    require(block_config[i] >= 1, ErrorCode::InvalidArgument,
            "DcnConfig: block " + std::to_string(i) + " has length " +
                std::to_string(block_config[i]));
  require(growth_rate >= 1 && init_features >= 1 && bottleneck_factor >= 1,
          ErrorCode::InvalidArgument, "DcnConfig: growth, stem width and bottleneck must be >= 1");
  require(compression > 0.0f && compression <= 1.0f, ErrorCode::InvalidArgument,
          "DcnConfig: compression must lie in (0, 1]");
  require(dropout == 0.0f, ErrorCode::InvalidArgument,
          "DcnConfig: only zero dropout is supported");
  require(num_classes >= 2, ErrorCode::InvalidArgument, "DcnConfig: need >= 2 classes");
  require(in_channels >= 1, ErrorCode::InvalidArgument, "DcnConfig: need >= 1 input channel");
  // Spatial extent after the stem must survive one 2×2 pool per transition.
  std::int64_t s = (input_size + 2 * 3 - 7) / 2 + 1;
  s = (s + 2 * 1 - 3) / 2 + 1;
  for (std::size_t i = 0; i + 1 < block_config.size(); ++i) {
    require(s >= 2, ErrorCode::InvalidArgument,
            "DcnConfig: input_size " + std::to_string(input_size) + " too small for " +
                std::to_string(block_config.size()) + " blocks");
    s /= 2;
  }
  require(input_size >= 7 && s >= 1, ErrorCode::InvalidArgument,
          "DcnConfig: input_size " + std::to_string(input_size) + " too small");
}

void to_json(nlohmann::json& j, const DcnConfig& c) {
  j = nlohmann::json{{"block_config", c.block_config},
                     {"growth_rate", c.growth_rate},
                     {"init_features", c.init_features},
                     {"bottleneck_factor", c.bottleneck_factor},
                     {"dropout", c.dropout},
                     {"compression", c.compression},
                     {"num_classes", c.num_classes},
                     {"input_size", c.input_size},
                     {"in_channels", c.in_channels}};
}

void from_json(const nlohmann::json& j, DcnConfig& c) {
  j.at("block_config").get_to(c.block_config);
  j.at("growth_rate").get_to(c.growth_rate);
  j.at("init_features").get_to(c.init_features);
  j.at("bottleneck_factor").get_to(c.bottleneck_factor);
  j.at("dropout").get_to(c.dropout);
  j.at("compression").get_to(c.compression);
  j.at("num_classes").get_to(c.num_classes);
  j.at("input_size").get_to(c.input_size);
  j.at("in_channels").get_to(c.in_channels);
}

BatchNormLayer BatchNormLayer::make(std::int64_t channels) {
  return BatchNormLayer{Tensor::ones({channels}, true), Tensor::zeros({channels}, true),
                        RunningStats::fresh(channels)};
}

Tensor BatchNormLayer::forward(const Tensor& x, bool training) {
  return batch_norm2d(x, gamma, beta, stats, training);
}

Tensor BatchNormLayer::infer(const Tensor& x) const {
  return batch_norm2d_inference(x, gamma, beta, stats);
}

namespace {

Tensor he_conv(std::int64_t out, std::int64_t in, std::int64_t k, std::mt19937_64& rng) {
  const float stddev = std::sqrt(2.0f / static_cast<float>(in * k * k));
  return Tensor::randn({out, in, k, k}, rng, stddev, true);
}

}  // namespace

Tensor dense_layer_forward(const Tensor& x, DenseLayer& layer, bool training) {
  require(x.rank() == 4 && x.dim(1) == layer.in_channels(), ErrorCode::ShapeMismatch,
          "dense layer expects " + std::to_string(layer.in_channels()) + " channels, got input " +
              shape_str(x.shape()));
  Tensor h = relu(layer.norm1.forward(x, training));
  h = conv2d(h, layer.conv1, 1, 0);
  h = relu(layer.norm2.forward(h, training));
  return conv2d(h, layer.conv2, 1, 1);
}

DcnModel DcnModel::build(const DcnConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  DcnModel m;
  m.config_ = config;
  const std::int64_t k = config.growth_rate;
  const std::int64_t bottleneck = static_cast<std::int64_t>(config.bottleneck_factor) * k;

  m.conv0_ = he_conv(config.init_features, config.in_channels, 7, rng);
  m.norm0_ = BatchNormLayer::make(config.init_features);
  std::int64_t channels = config.init_features;
  for (std::size_t b = 0; b < config.block_config.size(); ++b) {
    DenseBlock block;
    for (int l = 0; l < config.block_config[b]; ++l) {
      DenseLayer layer;
      layer.norm1 = BatchNormLayer::make(channels);
      layer.conv1 = he_conv(bottleneck, channels, 1, rng);
      layer.norm2 = BatchNormLayer::make(bottleneck);
      layer.conv2 = he_conv(k, bottleneck, 3, rng);
      block.layers.push_back(std::move(layer));
      channels += k;
    }
    m.blocks_.push_back(std::move(block));
    if (b + 1 < config.block_config.size()) {
      const auto out = static_cast<std::int64_t>(
          std::floor(static_cast<double>(channels) * static_cast<double>(config.compression)));
      require(out >= 1, ErrorCode::InvalidArgument, "DcnConfig: compression leaves no channels");
      TransitionLayer t{BatchNormLayer::make(channels), he_conv(out, channels, 1, rng)};
      m.transitions_.push_back(std::move(t));
      channels = out;
    }
  }
  m.norm_final_ = BatchNormLayer::make(channels);
  const float bound = 1.0f / std::sqrt(static_cast<float>(channels));
  m.fc_weight_ = Tensor::uniform({channels, config.num_classes}, rng, -bound, bound, true);
  m.fc_bias_ = Tensor::zeros({config.num_classes}, true);
  return m;
}

void DcnModel::check_input(const Tensor& batch) const {
  require(batch.rank() == 4 && batch.dim(1) == config_.in_channels &&
              batch.dim(2) == config_.input_size && batch.dim(3) == config_.input_size,
          ErrorCode::ShapeMismatch,
          "model expects N×" + std::to_string(config_.in_channels) + "×" +
              std::to_string(config_.input_size) + "×" + std::to_string(config_.input_size) +
              " input, got " + shape_str(batch.shape()));
  require(batch.dim(0) >= 1, ErrorCode::ShapeMismatch, "empty batch");
}

Tensor DcnModel::forward(const Tensor& batch) {
  if (mode_ == Mode::Eval) return infer(batch);
  check_input(batch);
  Tensor x = conv2d(batch, conv0_, 2, 3);
  x = max_pool2d(relu(norm0_.forward(x, true)), 3, 2, 1);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    for (auto& layer : blocks_[b].layers) {
      const Tensor parts[] = {x, dense_layer_forward(x, layer, true)};
      x = concat_channels(parts);
    }
    if (b < transitions_.size()) {
      auto& t = transitions_[b];
      x = avg_pool2d(conv2d(relu(t.norm.forward(x, true)), t.conv, 1, 0), 2, 2);
    }
  }
  x = global_avg_pool2d(relu(norm_final_.forward(x, true)));
  return linear(x, fc_weight_, fc_bias_);
}

Tensor DcnModel::infer(const Tensor& batch) const {
  check_input(batch);
  NoGradGuard guard;
  Tensor x = conv2d(batch, conv0_, 2, 3);
  x = max_pool2d(relu(norm0_.infer(x)), 3, 2, 1);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    for (const auto& layer : blocks_[b].layers) {
      Tensor h = conv2d(relu(layer.norm1.infer(x)), layer.conv1, 1, 0);
      h = conv2d(relu(layer.norm2.infer(h)), layer.conv2, 1, 1);
      const Tensor parts[] = {x, h};
      x = concat_channels(parts);
    }
    if (b < transitions_.size()) {
      const auto& t = transitions_[b];
      x = avg_pool2d(conv2d(relu(t.norm.infer(x)), t.conv, 1, 0), 2, 2);
    }
  }
  x = global_avg_pool2d(relu(norm_final_.infer(x)));
  return linear(x, fc_weight_, fc_bias_);
}

namespace {

void push_bn(std::vector<NamedTensor>& out, const std::string& prefix, const BatchNormLayer& bn,
             bool buffers) {
  if (buffers) {
    out.push_back({prefix + ".running_mean", bn.stats.mean});
    out.push_back({prefix + ".running_var", bn.stats.var});
  } else {
    out.push_back({prefix + ".weight", bn.gamma});
    out.push_back({prefix + ".bias", bn.beta});
  }
}

}  // namespace

std::vector<NamedTensor> DcnModel::parameters() const {
  std::vector<NamedTensor> out;
  out.push_back({"features.conv0.weight", conv0_});
  push_bn(out, "features.norm0", norm0_, false);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const auto block = "features.denseblock" + std::to_string(b + 1);
    for (std::size_t l = 0; l < blocks_[b].layers.size(); ++l) {
      const auto& layer = blocks_[b].layers[l];
      const auto p = block + ".denselayer" + std::to_string(l + 1);
      push_bn(out, p + ".norm1", layer.norm1, false);
      out.push_back({p + ".conv1.weight", layer.conv1});
      push_bn(out, p + ".norm2", layer.norm2, false);
      out.push_back({p + ".conv2.weight", layer.conv2});
    }
    if (b < transitions_.size()) {
      const auto p = "features.transition" + std::to_string(b + 1);
      push_bn(out, p + ".norm", transitions_[b].norm, false);
      out.push_back({p + ".conv.weight", transitions_[b].conv});
    }
  }
  push_bn(out, "features.norm5", norm_final_, false);
  out.push_back({"classifier.weight", fc_weight_});
  out.push_back({"classifier.bias", fc_bias_});
  return out;
}

std::vector<NamedTensor> DcnModel::buffers() const {
  std::vector<NamedTensor> out;
  push_bn(out, "features.norm0", norm0_, true);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const auto block = "features.denseblock" + std::to_string(b + 1);
    for (std::size_t l = 0; l < blocks_[b].layers.size(); ++l) {
      const auto p = block + ".denselayer" + std::to_string(l + 1);
      push_bn(out, p + ".norm1", blocks_[b].layers[l].norm1, true);
      push_bn(out, p + ".norm2", blocks_[b].layers[l].norm2, true);
    }
    if (b < transitions_.size())
      push_bn(out, "features.transition" + std::to_string(b + 1) + ".norm",
              transitions_[b].norm, true);
  }
  push_bn(out, "features.norm5", norm_final_, true);
  return out;
}

std::vector<Tensor> DcnModel::parameter_tensors() const {
  std::vector<Tensor> out;
  for (auto& p : parameters()) out.push_back(p.tensor);
  return out;
}

std::size_t DcnModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

void DcnModel::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

std::vector<BlockChannels> DcnModel::block_channels() const {
  std::vector<BlockChannels> out;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const auto& layers = blocks_[b].layers;
    BlockChannels bc;
    bc.in = layers.front().in_channels();
    bc.layers = static_cast<std::int64_t>(layers.size());
    bc.growth = layers.front().new_features();
    // The consumer of the block output reveals its width.
    bc.out = b < transitions_.size() ? transitions_[b].conv.dim(1) : fc_weight_.dim(0);
    out.push_back(bc);
  }
  return out;
}

}  // namespace glioma
