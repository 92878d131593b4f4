#include "glioma/adam.hpp"

#include <cmath>

#include "glioma/error.hpp"

namespace glioma {

AdamState AdamState::for_params(std::span<const Tensor> params, float lr) {
  AdamState state;
  state.lr = lr;
  for (const auto& p : params) {
    state.m.push_back(Tensor::zeros(p.shape()));
    state.v.push_back(Tensor::zeros(p.shape()));
  }
  return state;
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  require(state.m.size() == params.size() && state.v.size() == params.size(),
          ErrorCode::ShapeMismatch,
          "adam_step: optimizer tracks " + std::to_string(state.m.size()) + " buffers but got " +
              std::to_string(params.size()) + " parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(state.m[i].shape() == params[i].shape() && state.v[i].shape() == params[i].shape(),
            ErrorCode::ShapeMismatch,
            "adam_step: parameter " + std::to_string(i) + " shape " +
                shape_str(params[i].shape()) + " drifted from moment shape " +
                shape_str(state.m[i].shape()));
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const float bc1 = static_cast<float>(1.0 - std::pow(static_cast<double>(state.beta1), t));
  const float bc2 = static_cast<float>(1.0 - std::pow(static_cast<double>(state.beta2), t));
  const float b1 = state.beta1, b2 = state.beta2;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto w = p.data();
    const bool has_grad = p.has_grad();
    const auto g = has_grad ? p.grad() : std::span<const float>{};
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const float gj = has_grad ? g[j] : 0.0f;
      m[j] = b1 * m[j] + (1.0f - b1) * gj;
      v[j] = b2 * v[j] + (1.0f - b2) * gj * gj;
      const float mhat = m[j] / bc1;
      const float vhat = v[j] / bc2;
      w[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace glioma
