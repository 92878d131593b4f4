#include <cstring>
#include <random>

#include "glioma/checkpoint.hpp"
#include "glioma/ops.hpp"
#include "helpers.hpp"

using namespace glioma;

namespace {

// Reflected CRC-32 (polynomial 0xEDB88320), bit by bit.
std::uint32_t reference_crc(std::span<const std::uint8_t> data) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (auto byte : data) {
    crc ^= byte;
    for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

void reseal(std::vector<std::uint8_t>& bytes) {
  const auto crc = reference_crc(std::span(bytes).first(bytes.size() - 4));
  std::memcpy(bytes.data() + bytes.size() - 4, &crc, 4);
}

DcnModel small_model(std::uint64_t seed) {
  DcnConfig c;
  c.block_config = {2, 1};
  c.growth_rate = 4;
  c.init_features = 8;
  c.bottleneck_factor = 2;
  c.input_size = 16;
  return DcnModel::build(c, seed);
}

// One training step so that weights, running stats and moments are all nontrivial.
std::pair<DcnModel, AdamState> trained_model() {
  auto model = small_model(4);
  auto params = model.parameter_tensors();
  auto adam = AdamState::for_params(params, 0.01f);
  std::mt19937_64 rng(8);
  auto x = Tensor::uniform({4, 3, 16, 16}, rng, 0.0f, 1.0f);
  const std::vector<int> labels{0, 1, 2, 3};
  cross_entropy_loss(model.forward(x), labels).backward();
  adam_step(params, adam);
  model.set_mode(Mode::Eval);
  return {std::move(model), std::move(adam)};
}

}  // namespace

TEST_CASE("checkpoint bytes survive a round trip unchanged") {
  auto [model, adam] = trained_model();
  const auto bytes = serialize_checkpoint(model, adam);
  CHECK(std::memcmp(bytes.data(), "DCN1", 4) == 0);
  CHECK(reference_crc(std::span(bytes).first(bytes.size() - 4)) ==
        *reinterpret_cast<const std::uint32_t*>(bytes.data() + bytes.size() - 4));

  const auto back = deserialize_checkpoint(bytes);
  CHECK(back.model.config() == model.config());
  CHECK(back.model.mode() == Mode::Eval);
  CHECK(back.optimizer.step == adam.step);
  CHECK(serialize_checkpoint(back.model, back.optimizer) == bytes);

  std::mt19937_64 rng(1);
  auto x = Tensor::uniform({2, 3, 16, 16}, rng, 0.0f, 1.0f);
  const auto a = model.infer(x), b = back.model.infer(x);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("checkpoint files round trip") {
  auto [model, adam] = trained_model();
  const auto dir = scratch_dir("checkpoint_files");
  save_checkpoint(model, adam, dir / "a.ckpt");
  const auto loaded = load_checkpoint(dir / "a.ckpt");
  save_checkpoint(loaded.model, loaded.optimizer, dir / "b.ckpt");
  CHECK(file_bytes(dir / "a.ckpt") == file_bytes(dir / "b.ckpt"));
  CHECK_ERROR_CODE(load_checkpoint(dir / "missing.ckpt"), ErrorCode::Io);
}

TEST_CASE("corrupted checkpoints are rejected with a specific error") {
  auto [model, adam] = trained_model();
  const auto good = serialize_checkpoint(model, adam);

  SUBCASE("bad magic") {
    auto b = good;
    b[0] = 'X';
    CHECK_ERROR_CODE(deserialize_checkpoint(b), ErrorCode::BadMagic);
  }
  SUBCASE("unsupported version") {
    auto b = good;
    b[4] = 9;
    CHECK_ERROR_CODE(deserialize_checkpoint(b), ErrorCode::UnsupportedVersion);
  }
  SUBCASE("flipped payload bit") {
    for (std::size_t pos : {std::size_t{20}, good.size() / 2, good.size() - 5}) {
      auto b = good;
      b[pos] ^= 0x10;
      CHECK_ERROR_CODE(deserialize_checkpoint(b), ErrorCode::ChecksumMismatch);
    }
  }
  SUBCASE("truncated") {
    for (std::size_t len : {std::size_t{0}, std::size_t{7}, std::size_t{40}, good.size() / 2,
                            good.size() - 1}) {
      CAPTURE(len);
      CHECK_ERROR_CODE(deserialize_checkpoint(std::span(good).first(len)), ErrorCode::Truncated);
    }
  }
  SUBCASE("valid checksum over a malformed header") {
    auto b = good;
    b[12] = '#';  // first byte of the JSON header
    reseal(b);
    CHECK_ERROR_CODE(deserialize_checkpoint(b), ErrorCode::Decode);
  }
}
