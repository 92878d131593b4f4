#include <random>

#include "glioma/dcn.hpp"
#include "glioma/gradcheck.hpp"
#include "glioma/ops.hpp"
#include "helpers.hpp"

using namespace glioma;

namespace {

Tensor rnd(const Shape& s, std::mt19937_64& rng) { return Tensor::uniform(s, rng, -1.0f, 1.0f); }

// Weighted sum so every output element gets a distinct upstream gradient.
Tensor probe_sum(const Tensor& y, std::mt19937_64& rng) {
  static thread_local std::map<Shape, Tensor> probes;
  auto [it, fresh] = probes.try_emplace(y.shape());
  if (fresh) it->second = rnd(y.shape(), rng);
  return sum(mul(y, it->second));
}

}  // namespace

TEST_CASE("linear gradient is exact on dyadic inputs") {
  // Values and eps are powers of two so finite differences are exact.
  auto x = Tensor({2, 3}, {0.5f, -0.25f, 1.0f, 0.75f, -1.0f, 0.125f});
  auto w = Tensor({3, 2}, {0.5f, 1.0f, -0.5f, 0.25f, 2.0f, -1.0f});
  auto b = Tensor({2}, {0.25f, -0.5f});
  auto r = Tensor({2, 2}, {1.0f, -2.0f, 0.5f, 4.0f});
  const auto res = grad_check([&](const Tensor& in) { return sum(mul(linear(in, w, b), r)); }, x,
                              1.0f / 1024.0f);
  CHECK(res.max_rel_error < 1e-6);
  const auto rw = grad_check([&](const Tensor& in) { return sum(mul(linear(x, in, b), r)); }, w,
                             1.0f / 1024.0f);
  CHECK(rw.max_rel_error < 1e-6);
}

TEST_CASE("smooth ops in isolation agree with finite differences to 1e-4") {
  std::mt19937_64 rng(11);
  auto x4 = rnd({2, 3, 4, 4}, rng);
  auto w = rnd({2, 3, 3, 3}, rng);

  SUBCASE("conv2d input and weight, stride and padding") {
    for (auto [stride, pad] : {std::pair{1, 0}, {1, 1}, {2, 1}, {2, 0}}) {
      auto f = [&](const Tensor& in) { return probe_sum(conv2d(in, w, stride, pad), rng); };
      CHECK(grad_check(f, x4, 1e-2f).max_rel_error < 1e-4);
      auto g = [&](const Tensor& in) { return probe_sum(conv2d(x4, in, stride, pad), rng); };
      CHECK(grad_check(g, w, 1e-2f).max_rel_error < 1e-4);
    }
  }
  SUBCASE("batch norm input, gamma and beta") {
    auto gamma = Tensor::uniform({3}, rng, 0.5f, 1.5f);
    auto beta = rnd({3}, rng);
    auto stats = RunningStats::fresh(3);
    auto f = [&](const Tensor& in) {
      return probe_sum(batch_norm2d(in, gamma, beta, stats, true), rng);
    };
    CHECK(grad_check(f, x4, 1e-2f).max_rel_error < 1e-4);
    auto g = [&](const Tensor& in) {
      return probe_sum(batch_norm2d(x4, in, beta, stats, true), rng);
    };
    CHECK(grad_check(g, gamma, 1e-2f).max_rel_error < 1e-4);
    auto h = [&](const Tensor& in) {
      return probe_sum(batch_norm2d(x4, gamma, in, stats, true), rng);
    };
    CHECK(grad_check(h, beta, 1e-2f).max_rel_error < 1e-4);
  }
  SUBCASE("eval-mode batch norm") {
    auto gamma = Tensor::uniform({3}, rng, 0.5f, 1.5f);
    auto beta = rnd({3}, rng);
    auto stats = RunningStats::fresh(3);
    stats.var = Tensor::uniform({3}, rng, 0.5f, 2.0f);
    auto f = [&](const Tensor& in) {
      return probe_sum(batch_norm2d_inference(in, gamma, beta, stats), rng);
    };
    CHECK(grad_check(f, x4, 1e-2f).max_rel_error < 1e-4);
  }
  SUBCASE("softmax") {
    auto z = rnd({3, 4}, rng);
    auto f = [&](const Tensor& in) { return probe_sum(softmax(in), rng); };
    CHECK(grad_check(f, z, 1e-2f).max_rel_error < 1e-4);
  }
  SUBCASE("cross entropy") {
    auto z = rnd({3, 4}, rng);
    const std::vector<int> labels{0, 3, 1};
    auto f = [&](const Tensor& in) { return cross_entropy_loss(in, labels); };
    CHECK(grad_check(f, z, 1e-2f).max_rel_error < 1e-4);
  }
  SUBCASE("average pools, concat, scale and add") {
    auto f = [&](const Tensor& in) { return probe_sum(avg_pool2d(in, 2, 2), rng); };
    CHECK(grad_check(f, x4, 1e-2f).max_rel_error < 1e-4);
    auto g = [&](const Tensor& in) { return probe_sum(global_avg_pool2d(in), rng); };
    CHECK(grad_check(g, x4, 1e-2f).max_rel_error < 1e-4);
    auto h = [&](const Tensor& in) {
      const Tensor parts[] = {in, scale(in, 3.0f), add(in, in)};
      return probe_sum(concat_channels(parts), rng);
    };
    CHECK(grad_check(h, x4, 1e-2f).max_rel_error < 1e-4);
  }
}

TEST_CASE("piecewise-linear ops away from their kinks") {
  std::mt19937_64 rng(5);
  // Distinct values spaced far apart relative to eps, none near zero.
  std::vector<float> v(32);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (i % 2 ? 1.0f : -1.0f) * (0.1f + 0.05f * i);
  std::shuffle(v.begin(), v.end(), rng);
  auto x = Tensor({1, 2, 4, 4}, v);
  auto f = [&](const Tensor& in) { return probe_sum(relu(in), rng); };
  CHECK(grad_check(f, x, 1e-3f).max_rel_error < 1e-4);
  auto g = [&](const Tensor& in) { return probe_sum(max_pool2d(in, 2, 2), rng); };
  CHECK(grad_check(g, x, 1e-3f).max_rel_error < 1e-4);
  auto h = [&](const Tensor& in) { return probe_sum(max_pool2d(in, 3, 2, 1), rng); };
  CHECK(grad_check(h, x, 1e-3f).max_rel_error < 1e-4);
}

TEST_CASE("one dense block pass has correct gradients") {
  DcnConfig cfg;
  cfg.block_config = {2};
  cfg.growth_rate = 4;
  cfg.init_features = 6;
  cfg.bottleneck_factor = 2;
  cfg.input_size = 16;
  cfg.in_channels = 2;
  auto model = DcnModel::build(cfg, 9);
  std::mt19937_64 rng(2);
  auto x = rnd({3, 2, 16, 16}, rng);
  const std::vector<int> labels{0, 2, 3};
  auto f = [&](const Tensor& in) { return cross_entropy_loss(model.forward(in), labels); };
  const float steps[] = {1e-2f, 3e-3f, 1e-3f, 3e-4f, 1e-4f};
  CHECK(grad_check_piecewise(f, x, steps, 64, 1).max_rel_error < 1e-2);
  const auto params = model.parameters();
  auto conv = params.front().tensor;
  auto g = [&](const Tensor&) { return cross_entropy_loss(model.forward(x), labels); };
  CHECK(grad_check_piecewise(g, conv, steps, 64, 2).max_rel_error < 1e-2);
}

TEST_CASE("grad_check notices a wrong gradient") {
  auto x = Tensor({3}, {0.5f, -1.0f, 2.0f});
  // detach hides half of the true derivative 2x
  auto f = [](const Tensor& in) { return sum(mul(in, in.detach())); };
  CHECK(grad_check(f, x, 1e-2f).max_rel_error > 0.4);
  const float steps[] = {1e-2f, 1e-3f};
  CHECK(grad_check_piecewise(f, x, steps).max_rel_error > 0.4);
}

TEST_CASE("piecewise check picks the step that avoids a kink") {
  // |x| has its kink at 0; x sits 2e-3 away, inside the largest step
  auto x = Tensor({1}, {2e-3f});
  auto f = [](const Tensor& in) { return sum(add(relu(in), relu(scale(in, -1.0f)))); };
  CHECK(grad_check(f, x, 1e-2f).max_rel_error > 0.5);
  const float steps[] = {1e-2f, 1e-3f};
  CHECK(grad_check_piecewise(f, x, steps).max_rel_error < 1e-3);
}

TEST_CASE("grad_check rejects nondeterministic functions") {
  int calls = 0;
  auto f = [&](const Tensor& in) { return scale(sum(in), 1.0f + static_cast<float>(++calls)); };
  CHECK_ERROR_CODE(grad_check(f, Tensor({2}, {1.0f, 2.0f})), ErrorCode::NonDeterministic);
}
