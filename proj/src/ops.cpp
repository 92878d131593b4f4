#include "glioma/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "glioma/error.hpp"

namespace glioma {

namespace {

using detail::TensorImpl;
using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

bool needs_grad(std::initializer_list<const Tensor*> inputs) {
  if (!GradMode::enabled()) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

Tensor record(Shape shape, std::vector<float> data, const char* op, std::vector<Tensor> inputs,
              std::function<void(const TensorImpl&)> backward) {
  Tensor out(std::move(shape), std::move(data));
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!GradMode::enabled() || !any) return out;
  auto node = std::make_shared<detail::Node>();
  node->op = op;
  for (auto& in : inputs) node->inputs.push_back(in.impl());
  node->backward = std::move(backward);
  out.impl()->requires_grad = true;
  out.impl()->grad_fn = std::move(node);
  return out;
}

void expect_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  require(t.defined() && t.rank() == rank, ErrorCode::ShapeMismatch,
          std::string(op) + ": expected " + what + " of rank " + std::to_string(rank) + ", got " +
              (t.defined() ? shape_str(t.shape()) : std::string("undefined")));
}

struct ConvGeometry {
  std::int64_t n, c, h, w, o, kh, kw, stride, pad, ho, wo;
  std::int64_t k() const { return c * kh * kw; }
  std::int64_t p() const { return ho * wo; }
};

// cols is (C·kH·kW) × (N·Ho·Wo), row-major.
void im2col(const float* in, const ConvGeometry& g, float* cols) {
  const auto np = g.n * g.p();
  for (std::int64_t c = 0; c < g.c; ++c) {
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        float* row = cols + ((c * g.kh + ki) * g.kw + kj) * np;
        for (std::int64_t n = 0; n < g.n; ++n) {
          const float* plane = in + (n * g.c + c) * g.h * g.w;
          float* dst = row + n * g.p();
          for (std::int64_t oh = 0; oh < g.ho; ++oh) {
            const auto ih = oh * g.stride - g.pad + ki;
            for (std::int64_t ow = 0; ow < g.wo; ++ow) {
              const auto iw = ow * g.stride - g.pad + kj;
              dst[oh * g.wo + ow] =
                  (ih >= 0 && ih < g.h && iw >= 0 && iw < g.w) ? plane[ih * g.w + iw] : 0.0f;
            }
          }
        }
      }
    }
  }
}

void col2im_add(const float* cols, const ConvGeometry& g, float* in_grad) {
  const auto np = g.n * g.p();
  for (std::int64_t c = 0; c < g.c; ++c) {
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        const float* row = cols + ((c * g.kh + ki) * g.kw + kj) * np;
        for (std::int64_t n = 0; n < g.n; ++n) {
          float* plane = in_grad + (n * g.c + c) * g.h * g.w;
          const float* src = row + n * g.p();
          for (std::int64_t oh = 0; oh < g.ho; ++oh) {
            const auto ih = oh * g.stride - g.pad + ki;
            if (ih < 0 || ih >= g.h) continue;
            for (std::int64_t ow = 0; ow < g.wo; ++ow) {
              const auto iw = ow * g.stride - g.pad + kj;
              if (iw >= 0 && iw < g.w) plane[ih * g.w + iw] += src[oh * g.wo + ow];
            }
          }
        }
      }
    }
  }
}

}  // namespace

RunningStats RunningStats::fresh(std::int64_t channels) {
  return RunningStats{Tensor::zeros({channels}), Tensor::ones({channels}), 0.1f};
}

Tensor conv2d(const Tensor& input, const Tensor& weight, int stride, int padding) {
  expect_rank(input, 4, "conv2d", "input");
  expect_rank(weight, 4, "conv2d", "weight");
  require(stride >= 1, ErrorCode::InvalidArgument, "conv2d: stride must be >= 1");
  require(padding >= 0, ErrorCode::InvalidArgument, "conv2d: padding must be >= 0");
  const auto& is = input.shape();
  const auto& ws = weight.shape();
  require(is[1] == ws[1], ErrorCode::ShapeMismatch,
          "conv2d: input " + shape_str(is) + " has " + std::to_string(is[1]) +
              " channels but weight " + shape_str(ws) + " expects " + std::to_string(ws[1]));
  ConvGeometry g{is[0], is[1], is[2], is[3], ws[0], ws[2], ws[3], stride, padding, 0, 0};
  const auto hspan = g.h + 2 * g.pad - g.kh;
  const auto wspan = g.w + 2 * g.pad - g.kw;
  require(hspan >= 0 && wspan >= 0, ErrorCode::ShapeMismatch,
          "conv2d: kernel " + shape_str(ws) + " larger than padded input " + shape_str(is));
  g.ho = hspan / g.stride + 1;
  g.wo = wspan / g.stride + 1;

  const auto np = g.n * g.p();
  std::vector<float> cols(static_cast<std::size_t>(g.k() * np));
  im2col(input.data().data(), g, cols.data());
  RowMat prod(g.o, np);
  prod.noalias() = ConstMap(weight.data().data(), g.o, g.k()) * ConstMap(cols.data(), g.k(), np);

  std::vector<float> out(static_cast<std::size_t>(g.n * g.o * g.p()));
  for (std::int64_t n = 0; n < g.n; ++n)
    for (std::int64_t o = 0; o < g.o; ++o)
      std::copy_n(prod.data() + o * np + n * g.p(), g.p(), out.data() + (n * g.o + o) * g.p());

  if (!needs_grad({&input, &weight})) return Tensor({g.n, g.o, g.ho, g.wo}, std::move(out));

  auto in_impl = input.impl();
  auto w_impl = weight.impl();
  return record({g.n, g.o, g.ho, g.wo}, std::move(out), "conv2d", {input, weight},
                [g, in_impl, w_impl](const TensorImpl& self) {
                  const auto np = g.n * g.p();
                  RowMat gmat(g.o, np);
                  for (std::int64_t n = 0; n < g.n; ++n)
                    for (std::int64_t o = 0; o < g.o; ++o)
                      std::copy_n(self.grad.data() + (n * g.o + o) * g.p(), g.p(),
                                  gmat.data() + o * np + n * g.p());
                  if (w_impl->requires_grad) {
                    std::vector<float> cols(static_cast<std::size_t>(g.k() * np));
                    im2col(in_impl->data.data(), g, cols.data());
                    MutMap(w_impl->grad_buffer().data(), g.o, g.k()).noalias() +=
                        gmat * ConstMap(cols.data(), g.k(), np).transpose();
                  }
                  if (in_impl->requires_grad) {
                    RowMat dcols(g.k(), np);
                    dcols.noalias() = ConstMap(w_impl->data.data(), g.o, g.k()).transpose() * gmat;
                    col2im_add(dcols.data(), g, in_impl->grad_buffer().data());
                  }
                });
}

namespace {

Tensor batch_norm_impl(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                       const RunningStats& stats, RunningStats* update, bool training,
                       float eps) {
  expect_rank(input, 4, "batch_norm2d", "input");
  const auto& s = input.shape();
  const auto n = s[0], c = s[1], hw = s[2] * s[3];
  require(gamma.defined() && beta.defined() && gamma.numel() == static_cast<std::size_t>(c) &&
              beta.numel() == static_cast<std::size_t>(c),
          ErrorCode::ShapeMismatch,
          "batch_norm2d: channel mismatch, input " + shape_str(s) + " vs gamma " +
              (gamma.defined() ? shape_str(gamma.shape()) : "undefined") + " / beta " +
              (beta.defined() ? shape_str(beta.shape()) : "undefined"));
  require(stats.mean.numel() == static_cast<std::size_t>(c) &&
              stats.var.numel() == static_cast<std::size_t>(c),
          ErrorCode::ShapeMismatch, "batch_norm2d: running stats channel mismatch");
  const auto m = n * hw;
  if (training) {
    require(m > 1, ErrorCode::DegenerateVariance,
            "batch_norm2d: training mode needs more than one value per channel, got input " +
                shape_str(s));
  }

  const float* x = input.data().data();
  const float* gm = gamma.data().data();
  const float* bt = beta.data().data();
  std::vector<float> xhat(input.numel());
  std::vector<float> invstd(static_cast<std::size_t>(c));
  std::vector<float> out(input.numel());

  for (std::int64_t ch = 0; ch < c; ++ch) {
    float mean_f, var_f;
    if (training) {
      double acc = 0.0;
      for (std::int64_t b = 0; b < n; ++b) {
        const float* p = x + (b * c + ch) * hw;
        for (std::int64_t i = 0; i < hw; ++i) acc += p[i];
      }
      const double mean = acc / static_cast<double>(m);
      double sq = 0.0;
      for (std::int64_t b = 0; b < n; ++b) {
        const float* p = x + (b * c + ch) * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          const double d = p[i] - mean;
          sq += d * d;
        }
      }
      const double var = sq / static_cast<double>(m);
      mean_f = static_cast<float>(mean);
      var_f = static_cast<float>(var);
      if (update) {
        auto& rm = update->mean.data()[static_cast<std::size_t>(ch)];
        auto& rv = update->var.data()[static_cast<std::size_t>(ch)];
        const float mom = update->momentum;
        rm = (1.0f - mom) * rm + mom * mean_f;
        rv = (1.0f - mom) * rv +
             mom * static_cast<float>(var * static_cast<double>(m) / static_cast<double>(m - 1));
      }
    } else {
      mean_f = stats.mean.data()[static_cast<std::size_t>(ch)];
      var_f = stats.var.data()[static_cast<std::size_t>(ch)];
    }
    const float is = 1.0f / std::sqrt(var_f + eps);
    invstd[static_cast<std::size_t>(ch)] = is;
    for (std::int64_t b = 0; b < n; ++b) {
      const auto off = (b * c + ch) * hw;
      for (std::int64_t i = 0; i < hw; ++i) {
        const float xh = (x[off + i] - mean_f) * is;
        xhat[static_cast<std::size_t>(off + i)] = xh;
        out[static_cast<std::size_t>(off + i)] = gm[ch] * xh + bt[ch];
      }
    }
  }

  if (!needs_grad({&input, &gamma, &beta})) return Tensor(s, std::move(out));

  auto in_impl = input.impl();
  auto g_impl = gamma.impl();
  auto b_impl = beta.impl();
  return record(s, std::move(out), "batch_norm2d", {input, gamma, beta},
                [n, c, hw, m, training, in_impl, g_impl, b_impl, xhat = std::move(xhat),
                 invstd = std::move(invstd)](const TensorImpl& self) {
                  const float* dy = self.grad.data();
                  for (std::int64_t ch = 0; ch < c; ++ch) {
                    double sum_dy = 0.0, sum_dy_xh = 0.0;
                    for (std::int64_t b = 0; b < n; ++b) {
                      const auto off = (b * c + ch) * hw;
                      for (std::int64_t i = 0; i < hw; ++i) {
                        sum_dy += dy[off + i];
                        sum_dy_xh += static_cast<double>(dy[off + i]) * xhat[off + i];
                      }
                    }
                    if (g_impl->requires_grad)
                      g_impl->grad_buffer()[ch] += static_cast<float>(sum_dy_xh);
                    if (b_impl->requires_grad)
                      b_impl->grad_buffer()[ch] += static_cast<float>(sum_dy);
                    if (!in_impl->requires_grad) continue;
                    auto& dx = in_impl->grad_buffer();
                    const float scale = g_impl->data[ch] * invstd[ch];
                    if (training) {
                      const float mean_dy = static_cast<float>(sum_dy / static_cast<double>(m));
                      const float mean_dy_xh =
                          static_cast<float>(sum_dy_xh / static_cast<double>(m));
                      for (std::int64_t b = 0; b < n; ++b) {
                        const auto off = (b * c + ch) * hw;
                        for (std::int64_t i = 0; i < hw; ++i)
                          dx[off + i] +=
                              scale * (dy[off + i] - mean_dy - xhat[off + i] * mean_dy_xh);
                      }
                    } else {
                      for (std::int64_t b = 0; b < n; ++b) {
                        const auto off = (b * c + ch) * hw;
                        for (std::int64_t i = 0; i < hw; ++i) dx[off + i] += scale * dy[off + i];
                      }
                    }
                  }
                });
}

}  // namespace

Tensor batch_norm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                    RunningStats& stats, bool training, float eps) {
  return batch_norm_impl(input, gamma, beta, stats, &stats, training, eps);
}

Tensor batch_norm2d_inference(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                              const RunningStats& stats, float eps) {
  return batch_norm_impl(input, gamma, beta, stats, nullptr, false, eps);
}

Tensor relu(const Tensor& input) {
  const auto x = input.data();
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] < 0.0f ? 0.0f : x[i];  // NaN passes through
  auto in_impl = input.impl();
  return record(input.shape(), std::move(out), "relu", {input}, [in_impl](const TensorImpl& self) {
    auto& dx = in_impl->grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (in_impl->data[i] > 0.0f) dx[i] += self.grad[i];
  });
}

Tensor max_pool2d(const Tensor& input, int kernel, int stride, int padding) {
  expect_rank(input, 4, "max_pool2d", "input");
  require(kernel >= 1 && stride >= 1 && padding >= 0 && padding * 2 <= kernel,
          ErrorCode::InvalidArgument, "max_pool2d: invalid kernel/stride/padding");
  const auto& s = input.shape();
  const auto n = s[0], c = s[1], h = s[2], w = s[3];
  require(kernel <= h + 2 * padding && kernel <= w + 2 * padding, ErrorCode::ShapeMismatch,
          "max_pool2d: kernel " + std::to_string(kernel) + " exceeds input " + shape_str(s));
  const auto ho = (h + 2 * padding - kernel) / stride + 1;
  const auto wo = (w + 2 * padding - kernel) / stride + 1;
  std::vector<float> out(static_cast<std::size_t>(n * c * ho * wo));
  std::vector<std::int64_t> argmax(out.size());
  const float* x = input.data().data();
  for (std::int64_t plane = 0; plane < n * c; ++plane) {
    const float* src = x + plane * h * w;
    for (std::int64_t oh = 0; oh < ho; ++oh) {
      for (std::int64_t ow = 0; ow < wo; ++ow) {
        float best = -std::numeric_limits<float>::infinity();
        std::int64_t best_idx = -1;
        for (int ki = 0; ki < kernel; ++ki) {
          const auto ih = oh * stride - padding + ki;
          if (ih < 0 || ih >= h) continue;
          for (int kj = 0; kj < kernel; ++kj) {
            const auto iw = ow * stride - padding + kj;
            if (iw < 0 || iw >= w) continue;
            const float v = src[ih * w + iw];
            if (best_idx < 0 || v > best || std::isnan(v)) {
              best = v;
              best_idx = ih * w + iw;
            }
          }
        }
        const auto o = (plane * ho + oh) * wo + ow;
        out[static_cast<std::size_t>(o)] = best;
        argmax[static_cast<std::size_t>(o)] = plane * h * w + best_idx;
      }
    }
  }
  auto in_impl = input.impl();
  return record({n, c, ho, wo}, std::move(out), "max_pool2d", {input},
                [in_impl, argmax = std::move(argmax)](const TensorImpl& self) {
                  auto& dx = in_impl->grad_buffer();
                  for (std::size_t i = 0; i < argmax.size(); ++i)
                    dx[static_cast<std::size_t>(argmax[i])] += self.grad[i];
                });
}

Tensor avg_pool2d(const Tensor& input, int kernel, int stride) {
  expect_rank(input, 4, "avg_pool2d", "input");
  require(kernel >= 1 && stride >= 1, ErrorCode::InvalidArgument,
          "avg_pool2d: kernel and stride must be >= 1");
  const auto& s = input.shape();
  const auto n = s[0], c = s[1], h = s[2], w = s[3];
  require(kernel <= h && kernel <= w, ErrorCode::ShapeMismatch,
          "avg_pool2d: kernel " + std::to_string(kernel) + " exceeds spatial dims of " +
              shape_str(s));
  const auto ho = (h - kernel) / stride + 1;
  const auto wo = (w - kernel) / stride + 1;
  const float inv = 1.0f / static_cast<float>(kernel * kernel);
  std::vector<float> out(static_cast<std::size_t>(n * c * ho * wo));
  const float* x = input.data().data();
  for (std::int64_t plane = 0; plane < n * c; ++plane) {
    const float* src = x + plane * h * w;
    for (std::int64_t oh = 0; oh < ho; ++oh)
      for (std::int64_t ow = 0; ow < wo; ++ow) {
        float acc = 0.0f;
        for (int ki = 0; ki < kernel; ++ki)
          for (int kj = 0; kj < kernel; ++kj) acc += src[(oh * stride + ki) * w + ow * stride + kj];
        out[static_cast<std::size_t>((plane * ho + oh) * wo + ow)] = acc * inv;
      }
  }
  auto in_impl = input.impl();
  return record({n, c, ho, wo}, std::move(out), "avg_pool2d", {input},
                [in_impl, n, c, h, w, ho, wo, kernel, stride, inv](const TensorImpl& self) {
                  auto& dx = in_impl->grad_buffer();
                  for (std::int64_t plane = 0; plane < n * c; ++plane)
                    for (std::int64_t oh = 0; oh < ho; ++oh)
                      for (std::int64_t ow = 0; ow < wo; ++ow) {
                        const float g = self.grad[(plane * ho + oh) * wo + ow] * inv;
                        for (int ki = 0; ki < kernel; ++ki)
                          for (int kj = 0; kj < kernel; ++kj)
                            dx[plane * h * w + (oh * stride + ki) * w + ow * stride + kj] += g;
                      }
                });
}

Tensor global_avg_pool2d(const Tensor& input) {
  expect_rank(input, 4, "global_avg_pool2d", "input");
  const auto& s = input.shape();
  const auto planes = s[0] * s[1], hw = s[2] * s[3];
  require(hw > 0, ErrorCode::ShapeMismatch, "global_avg_pool2d: empty spatial extent");
  std::vector<float> out(static_cast<std::size_t>(planes));
  const float* x = input.data().data();
  for (std::int64_t p = 0; p < planes; ++p) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < hw; ++i) acc += x[p * hw + i];
    out[static_cast<std::size_t>(p)] = static_cast<float>(acc / static_cast<double>(hw));
  }
  auto in_impl = input.impl();
  return record({s[0], s[1]}, std::move(out), "global_avg_pool2d", {input},
                [in_impl, planes, hw](const TensorImpl& self) {
                  auto& dx = in_impl->grad_buffer();
                  const float inv = 1.0f / static_cast<float>(hw);
                  for (std::int64_t p = 0; p < planes; ++p) {
                    const float g = self.grad[p] * inv;
                    for (std::int64_t i = 0; i < hw; ++i) dx[p * hw + i] += g;
                  }
                });
}

Tensor concat_channels(std::span<const Tensor> inputs) {
  require(!inputs.empty(), ErrorCode::EmptyInput, "concat_channels: no inputs");
  for (const auto& t : inputs) expect_rank(t, 4, "concat_channels", "input");
  const auto& s0 = inputs[0].shape();
  std::int64_t channels = 0;
  for (const auto& t : inputs) {
    const auto& s = t.shape();
    require(s[0] == s0[0] && s[2] == s0[2] && s[3] == s0[3], ErrorCode::ShapeMismatch,
            "concat_channels: " + shape_str(s) + " incompatible with " + shape_str(s0));
    channels += s[1];
  }
  const auto n = s0[0], hw = s0[2] * s0[3];
  std::vector<float> out(static_cast<std::size_t>(n * channels * hw));
  std::vector<std::int64_t> offsets;
  std::int64_t c_off = 0;
  for (const auto& t : inputs) {
    const auto c = t.shape()[1];
    const float* src = t.data().data();
    for (std::int64_t b = 0; b < n; ++b)
      std::copy_n(src + b * c * hw, c * hw, out.data() + (b * channels + c_off) * hw);
    offsets.push_back(c_off);
    c_off += c;
  }
  std::vector<Tensor> ins(inputs.begin(), inputs.end());
  std::vector<std::shared_ptr<TensorImpl>> impls;
  for (const auto& t : ins) impls.push_back(t.impl());
  return record({n, channels, s0[2], s0[3]}, std::move(out), "concat_channels", std::move(ins),
                [impls, offsets, n, channels, hw](const TensorImpl& self) {
                  for (std::size_t k = 0; k < impls.size(); ++k) {
                    auto& impl = *impls[k];
                    if (!impl.requires_grad) continue;
                    const auto c = impl.shape[1];
                    auto& dx = impl.grad_buffer();
                    for (std::int64_t b = 0; b < n; ++b) {
                      const float* src = self.grad.data() + (b * channels + offsets[k]) * hw;
                      float* dst = dx.data() + b * c * hw;
                      for (std::int64_t i = 0; i < c * hw; ++i) dst[i] += src[i];
                    }
                  }
                });
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  expect_rank(input, 2, "linear", "input");
  expect_rank(weight, 2, "linear", "weight");
  expect_rank(bias, 1, "linear", "bias");
  const auto n = input.dim(0), f = input.dim(1), k = weight.dim(1);
  require(weight.dim(0) == f && bias.dim(0) == k, ErrorCode::ShapeMismatch,
          "linear: input " + shape_str(input.shape()) + ", weight " + shape_str(weight.shape()) +
              ", bias " + shape_str(bias.shape()) + " do not agree");
  RowMat y(n, k);
  y.noalias() = ConstMap(input.data().data(), n, f) * ConstMap(weight.data().data(), f, k);
  const float* b = bias.data().data();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < k; ++j) y(i, j) += b[j];
  std::vector<float> out(y.data(), y.data() + n * k);
  auto x_impl = input.impl(), w_impl = weight.impl(), b_impl = bias.impl();
  return record({n, k}, std::move(out), "linear", {input, weight, bias},
                [x_impl, w_impl, b_impl, n, f, k](const TensorImpl& self) {
                  ConstMap dy(self.grad.data(), n, k);
                  if (x_impl->requires_grad)
                    MutMap(x_impl->grad_buffer().data(), n, f).noalias() +=
                        dy * ConstMap(w_impl->data.data(), f, k).transpose();
                  if (w_impl->requires_grad)
                    MutMap(w_impl->grad_buffer().data(), f, k).noalias() +=
                        ConstMap(x_impl->data.data(), n, f).transpose() * dy;
                  if (b_impl->requires_grad) {
                    auto& db = b_impl->grad_buffer();
                    for (std::int64_t i = 0; i < n; ++i)
                      for (std::int64_t j = 0; j < k; ++j) db[j] += dy(i, j);
                  }
                });
}

Tensor softmax(const Tensor& logits) {
  expect_rank(logits, 2, "softmax", "logits");
  const auto n = logits.dim(0), k = logits.dim(1);
  require(k >= 2, ErrorCode::ShapeMismatch, "softmax: need at least two classes");
  const float* z = logits.data().data();
  for (std::size_t i = 0; i < logits.numel(); ++i)
    require(std::isfinite(z[i]), ErrorCode::NonFinite, "softmax: non-finite logit");
  std::vector<float> out(logits.numel());
  for (std::int64_t i = 0; i < n; ++i) {
    const float* row = z + i * k;
    const float mx = *std::max_element(row, row + k);
    double total = 0.0;
    for (std::int64_t j = 0; j < k; ++j) total += std::exp(static_cast<double>(row[j] - mx));
    for (std::int64_t j = 0; j < k; ++j)
      out[i * k + j] = static_cast<float>(std::exp(static_cast<double>(row[j] - mx)) / total);
  }
  auto z_impl = logits.impl();
  std::vector<float> y = out;
  return record({n, k}, std::move(out), "softmax", {logits},
                [z_impl, n, k, y = std::move(y)](const TensorImpl& self) {
                  auto& dz = z_impl->grad_buffer();
                  for (std::int64_t i = 0; i < n; ++i) {
                    double dot = 0.0;
                    for (std::int64_t j = 0; j < k; ++j)
                      dot += static_cast<double>(self.grad[i * k + j]) * y[i * k + j];
                    for (std::int64_t j = 0; j < k; ++j)
                      dz[i * k + j] +=
                          y[i * k + j] * (self.grad[i * k + j] - static_cast<float>(dot));
                  }
                });
}

Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> labels) {
  expect_rank(logits, 2, "cross_entropy_loss", "logits");
  const auto n = logits.dim(0), k = logits.dim(1);
  require(static_cast<std::int64_t>(labels.size()) == n, ErrorCode::ShapeMismatch,
          "cross_entropy_loss: " + std::to_string(labels.size()) + " labels for batch of " +
              std::to_string(n));
  require(n >= 1, ErrorCode::EmptyInput, "cross_entropy_loss: empty batch");
  for (int l : labels)
    require(l >= 0 && l < k, ErrorCode::OutOfRange,
            "cross_entropy_loss: label " + std::to_string(l) + " outside [0," +
                std::to_string(k) + ")");
  const float* z = logits.data().data();
  std::vector<float> probs(logits.numel());
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const float* row = z + i * k;
    const double mx = *std::max_element(row, row + k);
    double s = 0.0;
    for (std::int64_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
    const double lse = mx + std::log(s);
    total += lse - row[labels[i]];
    for (std::int64_t j = 0; j < k; ++j)
      probs[i * k + j] = static_cast<float>(std::exp(row[j] - lse));
  }
  auto z_impl = logits.impl();
  std::vector<int> lab(labels.begin(), labels.end());
  return record({}, {static_cast<float>(total / static_cast<double>(n))}, "cross_entropy_loss",
                {logits},
                [z_impl, n, k, probs = std::move(probs), lab = std::move(lab)](
                    const TensorImpl& self) {
                  auto& dz = z_impl->grad_buffer();
                  const float g = self.grad[0] / static_cast<float>(n);
                  for (std::int64_t i = 0; i < n; ++i)
                    for (std::int64_t j = 0; j < k; ++j)
                      dz[i * k + j] += g * (probs[i * k + j] - (j == lab[i] ? 1.0f : 0.0f));
                });
}

Tensor sum(const Tensor& input) {
  double acc = 0.0;
  for (float v : input.data()) acc += v;
  auto in_impl = input.impl();
  return record({}, {static_cast<float>(acc)}, "sum", {input}, [in_impl](const TensorImpl& self) {
    auto& dx = in_impl->grad_buffer();
    for (auto& v : dx) v += self.grad[0];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorCode::ShapeMismatch,
          "mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const auto x = a.data(), y = b.data();
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  auto a_impl = a.impl(), b_impl = b.impl();
  return record(a.shape(), std::move(out), "mul", {a, b}, [a_impl, b_impl](const TensorImpl& self) {
    if (a_impl->requires_grad) {
      auto& da = a_impl->grad_buffer();
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += self.grad[i] * b_impl->data[i];
    }
    if (b_impl->requires_grad) {
      auto& db = b_impl->grad_buffer();
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += self.grad[i] * a_impl->data[i];
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorCode::ShapeMismatch,
          "add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const auto x = a.data(), y = b.data();
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  auto a_impl = a.impl(), b_impl = b.impl();
  return record(a.shape(), std::move(out), "add", {a, b}, [a_impl, b_impl](const TensorImpl& self) {
    for (auto* impl : {a_impl.get(), b_impl.get()}) {
      if (!impl->requires_grad) continue;
      auto& d = impl->grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
    }
  });
}

Tensor scale(const Tensor& input, float factor) {
  const auto x = input.data();
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor;
  auto in_impl = input.impl();
  return record(input.shape(), std::move(out), "scale", {input},
                [in_impl, factor](const TensorImpl& self) {
                  auto& dx = in_impl->grad_buffer();
                  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i] * factor;
                });
}

Tensor reshape(const Tensor& input, const Shape& shape) {
  require(static_cast<std::size_t>(shape_numel(shape)) == input.numel(), ErrorCode::ShapeMismatch,
          "reshape: cannot view " + shape_str(input.shape()) + " as " + shape_str(shape));
  auto in_impl = input.impl();
  return record(shape, std::vector<float>(input.data().begin(), input.data().end()), "reshape",
                {input}, [in_impl](const TensorImpl& self) {
                  auto& dx = in_impl->grad_buffer();
                  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
                });
}

}  // namespace glioma
