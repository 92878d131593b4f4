#include <random>
#include <set>

#include "glioma/dcn.hpp"
#include "helpers.hpp"

using namespace glioma;

namespace {

// Channel arithmetic written out independently of the model builder.
std::int64_t expected_width(const DcnConfig& c) {
  std::int64_t ch = c.init_features;
  for (std::size_t b = 0; b < c.block_config.size(); ++b) {
    ch += static_cast<std::int64_t>(c.block_config[b]) * c.growth_rate;
    if (b + 1 < c.block_config.size()) ch = static_cast<std::int64_t>(ch * c.compression);
  }
  return ch;
}

}  // namespace

TEST_CASE("preset classifier widths") {
  CHECK(expected_width(DcnConfig::dcn1()) == 128);
  CHECK(expected_width(DcnConfig::dcn2()) == 1104);
  auto small1 = DcnConfig::dcn1();
  small1.input_size = 32;
  CHECK(DcnModel::build(small1, 0).classifier_width() == 128);
  auto small2 = DcnConfig::dcn2();
  small2.input_size = 32;
  CHECK(DcnModel::build(small2, 0).classifier_width() == 1104);
}

TEST_CASE("block outputs grow by L·k on random configurations") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    DcnConfig c;
    const int blocks = 1 + static_cast<int>(rng() % 4);
    for (int b = 0; b < blocks; ++b) c.block_config.push_back(1 + static_cast<int>(rng() % 4));
    c.growth_rate = 1 + static_cast<int>(rng() % 8);
    c.init_features = 2 + static_cast<int>(rng() % 15);
    c.bottleneck_factor = 1 + static_cast<int>(rng() % 4);
    c.compression = (rng() % 2) ? 0.5f : 1.0f;
    c.input_size = 32;
    c.in_channels = 1 + static_cast<int>(rng() % 3);
    CAPTURE(trial);
    const auto model = DcnModel::build(c, trial);
    const auto blocks_ch = model.block_channels();
    REQUIRE(blocks_ch.size() == c.block_config.size());
    std::int64_t expected_in = c.init_features;
    for (std::size_t b = 0; b < blocks_ch.size(); ++b) {
      const auto& bc = blocks_ch[b];
      CHECK(bc.in == expected_in);
      CHECK(bc.layers == c.block_config[b]);
      CHECK(bc.growth == c.growth_rate);
      CHECK(bc.out == bc.in + bc.layers * bc.growth);
      expected_in = static_cast<std::int64_t>(bc.out * c.compression);
    }
    CHECK(model.classifier_width() == expected_width(c));
  }
}

TEST_CASE("parameter names are unique and hierarchical") {
  auto c = DcnConfig::dcn1();
  c.input_size = 32;
  const auto model = DcnModel::build(c, 1);
  std::set<std::string> names;
  for (const auto& p : model.parameters()) CHECK(names.insert(p.name).second);
  CHECK(names.count("features.conv0.weight"));
  CHECK(names.count("features.denseblock1.denselayer1.norm1.weight"));
  CHECK(names.count("features.transition3.conv.weight"));
  CHECK(names.count("classifier.weight"));
  CHECK(names.count("classifier.bias"));
  for (const auto& b : model.buffers()) CHECK(names.insert(b.name).second);
}

TEST_CASE("same seed builds identical weights") {
  auto c = DcnConfig::dcn1();
  c.input_size = 32;
  const auto a = DcnModel::build(c, 5).parameters();
  const auto b = DcnModel::build(c, 5).parameters();
  const auto d = DcnModel::build(c, 6).parameters();
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(),
                     b[i].tensor.data().begin()));
    differs = differs || !std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(),
                                     d[i].tensor.data().begin());
  }
  CHECK(differs);
}

TEST_CASE("eval mode is a pure function and matches infer") {
  auto c = DcnConfig::dcn1();
  c.input_size = 32;
  auto model = DcnModel::build(c, 2);
  std::mt19937_64 rng(1);
  auto x = Tensor::uniform({2, 3, 32, 32}, rng, 0.0f, 1.0f);
  model.forward(x);  // one training pass moves the running stats
  model.set_mode(Mode::Eval);
  const auto a = model.forward(x);
  const auto b = model.forward(x);
  const auto c2 = model.infer(x);
  CHECK(a.shape() == Shape{2, 4});
  for (std::size_t i = 0; i < a.numel(); ++i) {
    CHECK(a.data()[i] == b.data()[i]);
    CHECK(a.data()[i] == c2.data()[i]);
  }
}

TEST_CASE("configuration errors") {
  auto c = DcnConfig::dcn1();
  c.dropout = 0.2f;
  CHECK_ERROR_CODE(c.validate(), ErrorCode::InvalidArgument);
  c = DcnConfig::dcn1();
  c.input_size = 16;  // stem leaves 4×4, three transitions need 8×8
  CHECK_ERROR_CODE(c.validate(), ErrorCode::InvalidArgument);
  CHECK_ERROR_CODE(DcnConfig::preset("DCN3"), ErrorCode::InvalidArgument);
  c = DcnConfig::dcn1();
  c.input_size = 32;
  auto model = DcnModel::build(c, 0);
  CHECK_ERROR_CODE(model.forward(Tensor::zeros({1, 1, 32, 32})), ErrorCode::ShapeMismatch);
}

TEST_CASE("config JSON round trip") {
  const auto c = DcnConfig::dcn2();
  nlohmann::json j = c;
  CHECK(j.get<DcnConfig>() == c);
}
