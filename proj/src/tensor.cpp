#include "glioma/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "glioma/error.hpp"

namespace glioma {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    require(d >= 0, ErrorCode::ShapeMismatch, "negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<float>& detail::TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0f);
  return grad;
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool enabled) { g_grad_enabled = enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor::Tensor(Shape shape, std::vector<float> data, bool requires_grad) {
  const auto n = shape_numel(shape);
  require(static_cast<std::size_t>(n) == data.size(), ErrorCode::ShapeMismatch,
          "tensor data length " + std::to_string(data.size()) + " does not match shape " +
              shape_str(shape));
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, 0.0f, requires_grad);
}

Tensor Tensor::ones(const Shape& shape, bool requires_grad) {
  return full(shape, 1.0f, requires_grad);
}

Tensor Tensor::full(const Shape& shape, float value, bool requires_grad) {
  return Tensor(shape, std::vector<float>(static_cast<std::size_t>(shape_numel(shape)), value),
                requires_grad);
}

Tensor Tensor::scalar(float value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

Tensor Tensor::randn(const Shape& shape, std::mt19937_64& rng, float stddev, bool requires_grad) {
  std::normal_distribution<float> dist(0.0f, stddev);
  std::vector<float> values(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : values) v = dist(rng);
  return Tensor(shape, std::move(values), requires_grad);
}

Tensor Tensor::uniform(const Shape& shape, std::mt19937_64& rng, float lo, float hi,
                       bool requires_grad) {
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> values(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : values) v = dist(rng);
  return Tensor(shape, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const {
  require(defined(), ErrorCode::InvalidArgument, "use of undefined tensor");
  return impl_->shape;
}

std::int64_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  require(axis < s.size(), ErrorCode::OutOfRange,
          "axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return defined() ? impl_->data.size() : 0; }

std::span<float> Tensor::data() {
  require(defined(), ErrorCode::InvalidArgument, "use of undefined tensor");
  return impl_->data;
}

std::span<const float> Tensor::data() const {
  require(defined(), ErrorCode::InvalidArgument, "use of undefined tensor");
  return impl_->data;
}

float Tensor::item() const {
  require(numel() == 1, ErrorCode::ShapeMismatch,
          "item() requires a single-element tensor, got " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return defined() && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  require(defined(), ErrorCode::InvalidArgument, "use of undefined tensor");
  impl_->requires_grad = flag;
  return *this;
}

bool Tensor::has_grad() const { return defined() && !impl_->grad.empty(); }

std::span<const float> Tensor::grad() const {
  require(has_grad(), ErrorCode::Autograd, "tensor has no gradient");
  return impl_->grad;
}

std::span<float> Tensor::mutable_grad() {
  require(defined(), ErrorCode::InvalidArgument, "use of undefined tensor");
  return impl_->grad_buffer();
}

void Tensor::zero_grad() {
  if (defined()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

Tensor Tensor::detach() const { return Tensor(shape(), impl_->data, false); }

Tensor Tensor::clone() const {
  Tensor out(shape(), impl_->data, impl_->requires_grad);
  return out;
}

bool Tensor::is_leaf() const { return defined() && impl_->grad_fn == nullptr; }

void Tensor::backward() const {
  require(defined(), ErrorCode::Autograd, "backward on undefined tensor");
  require(numel() == 1, ErrorCode::Autograd,
          "backward requires a scalar, got shape " + shape_str(shape()));
  require(!impl_->graph_consumed, ErrorCode::Autograd,
          "backward called twice on the same graph; re-run the forward pass first");
  require(impl_->requires_grad, ErrorCode::Autograd,
          "backward on a tensor that does not require grad");

  // Iterative post-order DFS gives a topological order of the recorded graph.
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> seen;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  seen.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->grad_fn && next < node->grad_fn->inputs.size()) {
      auto* child = node->grad_fn->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  impl_->grad_buffer()[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* node = *it;
    if (node->grad_fn && !node->grad.empty()) node->grad_fn->backward(*node);
  }
  for (auto* node : order) node->grad_fn.reset();
  impl_->graph_consumed = true;
}

}  // namespace glioma
