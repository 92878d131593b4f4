#include <cmath>

#include "glioma/adam.hpp"
#include "glioma/ops.hpp"
#include "helpers.hpp"

using namespace glioma;

TEST_CASE("first Adam step moves each parameter by lr against its gradient sign") {
  auto p = Tensor({3}, {1.0f, -2.0f, 0.5f}, true);
  sum(mul(p, Tensor({3}, {0.3f, -4.0f, 0.0f}))).backward();
  std::vector<Tensor> params{p};
  auto state = AdamState::for_params(params, 0.01f);
  adam_step(params, state);
  // m̂ = g, v̂ = g², step = lr·g/(|g|+eps)
  CHECK(p.data()[0] == doctest::Approx(0.99).epsilon(1e-6));
  CHECK(p.data()[1] == doctest::Approx(-1.99).epsilon(1e-6));
  CHECK(p.data()[2] == 0.5f);
  CHECK(state.step == 1);
}

TEST_CASE("second Adam step matches the bias-corrected recurrence") {
  auto p = Tensor({1}, {0.0f}, true);
  std::vector<Tensor> params{p};
  auto state = AdamState::for_params(params, 0.1f);
  const double g1 = 1.0, g2 = -3.0;
  for (double g : {g1, g2}) {
    p.zero_grad();
    sum(scale(p, static_cast<float>(g))).backward();
    adam_step(params, state);
  }
  double m = 0, v = 0, x = 0;
  int t = 0;
  for (double g : {g1, g2}) {
    ++t;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    x -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
  }
  CHECK(p.data()[0] == doctest::Approx(x).epsilon(1e-5));
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  auto p = Tensor({2}, {1.0f, 2.0f}, true);
  std::vector<Tensor> params{p};
  auto state = AdamState::for_params(params, 0.0f);
  for (int i = 0; i < 5; ++i) {
    p.zero_grad();
    sum(mul(p, p)).backward();
    adam_step(params, state);
  }
  CHECK(p.data()[0] == 1.0f);
  CHECK(p.data()[1] == 2.0f);
}

TEST_CASE("Adam rejects parameters whose shape drifted") {
  auto p = Tensor::zeros({2}, true);
  std::vector<Tensor> params{p};
  auto state = AdamState::for_params(params);
  std::vector<Tensor> other{Tensor::zeros({3}, true)};
  CHECK_ERROR_CODE(adam_step(other, state), ErrorCode::ShapeMismatch);
}
