#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "glioma/tensor.hpp"

namespace glioma {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  double grad_scale = 0.0;  // max |gradient| over the checked elements
  std::size_t checked = 0;
  std::size_t worst_index = 0;
};

/// Compares backward() gradients of a scalar function against central finite
/// differences (f(x+eps) − f(x−eps)) / (2·eps), element by element.
///
/// The error for element i is |analytic_i − numeric_i| divided by the largest
/// gradient magnitude seen over the checked elements, so entries that are tiny
/// relative to the rest of the gradient are judged against the gradient's own
/// scale rather than against float32 rounding noise. The denominator of each
/// difference uses the perturbed values actually representable in float32.
///
/// `f` is evaluated with `x` mutated in place; it must read `x` (or a tensor
/// aliasing it) and be deterministic. When `max_elements` is nonzero, a seeded
/// random subset of that many elements is checked.
GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                           float eps = 1e-3f, std::size_t max_elements = 0,
                           std::uint64_t seed = 0);

/// For piecewise-smooth functions (ReLU, max-pool). Each element is probed
/// at every step in `steps` (largest first). Readings are scored by how much
/// two estimates of the same slope disagree, plus float32 rounding noise: a
/// central difference by its left/right asymmetry, a one-sided slope by its
/// stability between consecutive steps (then Richardson-extrapolated). When
/// a one-sided reading wins, the element sits at a kink and the analytic
/// value is compared with the nearer of the left and right derivatives.
GradCheckResult grad_check_piecewise(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                                     std::span<const float> steps, std::size_t max_elements = 0,
                                     std::uint64_t seed = 0);

}  // namespace glioma
