#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace glioma {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl;

// One recorded operation on the autodiff tape.
struct Node {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  // Reads the output's gradient and accumulates into the inputs' gradients.
  std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool graph_consumed = false;
  std::shared_ptr<Node> grad_fn;

  std::vector<float>& grad_buffer();
};

}  // namespace detail

// Gradient recording is enabled per thread; inference threads disable it with
// NoGradGuard so eval-mode forwards never touch the tape.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool enabled);
};

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major float32 tensor with an optional gradient buffer.
///
/// A Tensor is a shared handle: copies alias the same storage. Operations in
/// ops.hpp record themselves on the tape when any input requires a gradient.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<float> data, bool requires_grad = false);

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor ones(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, float value, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);
  static Tensor randn(const Shape& shape, std::mt19937_64& rng, float stddev = 1.0f,
                      bool requires_grad = false);
  static Tensor uniform(const Shape& shape, std::mt19937_64& rng, float lo, float hi,
                        bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::int64_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<float> data();
  std::span<const float> data() const;
  float item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const float> grad() const;
  std::span<float> mutable_grad();
  void zero_grad();

  // Copy of the values with no history and no gradient.
  Tensor detach() const;
  Tensor clone() const;

  /// Reverse-mode sweep from this scalar. Gradients accumulate into every
  /// reachable tensor that requires them; the recorded graph is released.
  void backward() const;

  bool is_leaf() const;
  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

}  // namespace glioma
