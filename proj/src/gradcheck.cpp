#include "glioma/gradcheck.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "glioma/error.hpp"

namespace glioma {

namespace {

GradCheckResult check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                      std::span<const float> steps, std::size_t max_elements, std::uint64_t seed) {
  require(!steps.empty(), ErrorCode::InvalidArgument, "grad_check: no step sizes");
  for (float eps : steps)
    require(eps > 0.0f, ErrorCode::InvalidArgument, "grad_check: eps must be positive");
  auto eval = [&] {
    NoGradGuard guard;
    const Tensor y = f(x);
    require(y.numel() == 1, ErrorCode::InvalidArgument, "grad_check: f must return a scalar");
    return y.item();
  };
  const float first = eval();
  const float second = eval();
  require(std::bit_cast<std::uint32_t>(first) == std::bit_cast<std::uint32_t>(second),
          ErrorCode::NonDeterministic, "grad_check: f is not deterministic");

  x.set_requires_grad(true);
  x.zero_grad();
  f(x).backward();
  std::vector<float> analytic(x.grad().begin(), x.grad().end());

  std::vector<std::size_t> indices(x.numel());
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  if (max_elements != 0 && max_elements < indices.size()) {
    std::mt19937_64 rng(seed);
    std::shuffle(indices.begin(), indices.end(), rng);
    indices.resize(max_elements);
    std::sort(indices.begin(), indices.end());
  }

  std::vector<double> numeric(indices.size());
  auto values = x.data();
  const double f0 = first;
  // Rounding granularity of f; slopes at step e carry noise of order ulp/e.
  const double ulp = std::nextafter(static_cast<float>(std::abs(f0)),
                                    std::numeric_limits<float>::infinity()) -
                     static_cast<float>(std::abs(f0));
  std::vector<double> right(steps.size()), left(steps.size()), central(steps.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto i = indices[k];
    const float orig = values[i];
    for (std::size_t s = 0; s < steps.size(); ++s) {
      const float hi = orig + steps[s];
      const float lo = orig - steps[s];
      values[i] = hi;
      const double f_hi = eval();
      values[i] = lo;
      const double f_lo = eval();
      values[i] = orig;
      central[s] = (f_hi - f_lo) / (static_cast<double>(hi) - static_cast<double>(lo));
      right[s] = (f_hi - f0) / (static_cast<double>(hi) - orig);
      left[s] = (f0 - f_lo) / (orig - static_cast<double>(lo));
    }
    numeric[k] = central[0];
    if (steps.size() == 1) continue;

    // Each reading is scored by how much two estimates of the same slope
    // disagree plus the rounding noise at that step.
    struct Pick {
      double score = std::numeric_limits<double>::infinity();
      double value = 0.0;
    } mid, side[2];
    for (std::size_t s = 0; s + 1 < steps.size(); ++s) {
      // a central reading must be symmetric and agree with the next step
      const double sc = std::max(std::abs(right[s] - left[s]), std::abs(central[s] - central[s + 1])) +
                        2.0 * ulp / steps[s + 1];
      if (sc < mid.score) mid = {sc, central[s]};
      const double r = static_cast<double>(steps[s]) / steps[s + 1];
      const std::vector<double>* sides[2] = {&right, &left};
      for (int d = 0; d < 2; ++d) {
        const double a = (*sides[d])[s], b = (*sides[d])[s + 1];
        const double so = std::abs(a - b) + 2.0 * ulp / steps[s + 1];
        if (so < side[d].score) side[d] = {so, (r * b - a) / (r - 1.0)};
      }
    }
    if (mid.score <= std::min(side[0].score, side[1].score)) {
      numeric[k] = mid.value;
    } else {
      // x sits on or next to a kink: either one-sided derivative is valid
      const double g = analytic[i];
      numeric[k] = std::abs(side[0].value - g) <= std::abs(side[1].value - g) ? side[0].value
                                                                               : side[1].value;
    }
  }

  GradCheckResult result;
  result.checked = indices.size();
  for (std::size_t k = 0; k < indices.size(); ++k)
    result.grad_scale = std::max({result.grad_scale, std::abs(numeric[k]),
                                  std::abs(static_cast<double>(analytic[indices[k]]))});
  const double denom = std::max(result.grad_scale, 1e-12);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const double err = std::abs(static_cast<double>(analytic[indices[k]]) - numeric[k]);
    if (err > result.max_abs_error) {
      result.max_abs_error = err;
      result.worst_index = indices[k];
    }
  }
  result.max_rel_error = result.max_abs_error / denom;
  return result;
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, float eps,
                           std::size_t max_elements, std::uint64_t seed) {
  const float steps[] = {eps};
  return check(f, std::move(x), steps, max_elements, seed);
}

GradCheckResult grad_check_piecewise(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                                     std::span<const float> steps, std::size_t max_elements,
                                     std::uint64_t seed) {
  return check(f, std::move(x), steps, max_elements, seed);
}

}  // namespace glioma
