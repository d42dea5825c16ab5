#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tandem/matmul.hpp"
#include "tandem/parallel.hpp"
#include "tandem/rng.hpp"
#include "tandem/tensor.hpp"

namespace tandem {

enum class Mode { kTrain, kEval };

namespace ops {

/// Parameters of a square same-padded convolution. Weights are
/// (out_channels, in_channels, k, k) with k in {1, 3}; bias has one entry per
/// output channel.
template <typename T>
struct ConvParamsT {
  TensorT<T> weights;
  TensorT<T> bias;
  std::size_t stride = 1;
};
using ConvParams = ConvParamsT<float>;

template <typename T>
struct ConvGradsT {
  TensorT<T> input;
  TensorT<T> weights;
  TensorT<T> bias;
};

template <typename T>
struct DenseGradsT {
  TensorT<T> input;
  TensorT<T> weights;
  TensorT<T> bias;
};

template <typename T>
struct DropoutResultT {
  TensorT<T> output;
  TensorT<T> mask;  // 0 or 1/(1-rate) per element in train mode
};

template <typename T>
struct SoftmaxLossT {
  double mean_loss = 0.0;
  TensorT<T> logit_grad;
};

namespace detail {

using tandem::detail::gemm;
using tandem::detail::gemm_at_b;
using tandem::detail::kSampleBlocks;
using tandem::detail::parallel_blocks;
using tandem::detail::transpose;

template <typename T>
void validate_conv_args(const TensorT<T>& input, const ConvParamsT<T>& p) {
  if (input.rank() != 4) {
    throw std::invalid_argument("conv2d: input must be rank-4 NCHW");
  }
  if (p.weights.rank() != 4) {
    throw std::invalid_argument("conv2d: weights must be rank-4");
  }
  const std::size_t k = p.weights.extent(2);
  if (k != p.weights.extent(3) || (k != 1 && k != 3)) {
    throw std::invalid_argument("conv2d: kernel must be square with k in {1,3}");
  }
  if (p.stride != 1 && p.stride != 2) {
    throw std::invalid_argument("conv2d: stride must be 1 or 2");
  }
  if (input.extent(1) != p.weights.extent(1)) {
    throw std::invalid_argument(
        "conv2d: input has " + std::to_string(input.extent(1)) +
        " channels, weights expect " + std::to_string(p.weights.extent(1)));
  }
  if (p.bias.rank() != 1 || p.bias.extent(0) != p.weights.extent(0)) {
    throw std::invalid_argument("conv2d: bias length must equal out_channels");
  }
}

/// Output-coordinate range [lo, hi) whose source index o*stride + d - pad
/// lands inside [0, extent).
inline std::pair<std::size_t, std::size_t> valid_span(std::size_t extent,
                                                      std::size_t out_extent,
                                                      std::size_t stride,
                                                      std::size_t d,
                                                      std::size_t pad) {
  const std::size_t lo = pad > d ? (pad - d + stride - 1) / stride : 0;
  std::size_t hi = (extent - 1 + pad >= d) ? (extent - 1 + pad - d) / stride + 1
                                           : 0;
  hi = std::min(hi, out_extent);
  return {std::min(lo, hi), hi};
}

/// Gathers the k*k patch around every output position of one sample into a
/// (C*k*k) x (Ho*Wo) matrix. Out-of-bounds input reads as zero. Bounds are
/// hoisted out of the inner loops so the copies stay branch-free.
template <typename T>
void im2col(const T* in, std::size_t c_in, std::size_t h, std::size_t w,
            std::size_t k, std::size_t stride, std::size_t pad, std::size_t ho,
            std::size_t wo, T* out) {
  const std::size_t cols = ho * wo;
  std::size_t row = 0;
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t dy = 0; dy < k; ++dy) {
      const auto [y_lo, y_hi] = valid_span(h, ho, stride, dy, pad);
      for (std::size_t dx = 0; dx < k; ++dx, ++row) {
        const auto [x_lo, x_hi] = valid_span(w, wo, stride, dx, pad);
        T* dst = out + row * cols;
        std::fill(dst, dst + y_lo * wo, T(0));
        std::fill(dst + y_hi * wo, dst + ho * wo, T(0));
        for (std::size_t y = y_lo; y < y_hi; ++y) {
          const std::size_t ys = y * stride + dy - pad;
          const T* src = in + (c * h + ys) * w + (x_lo * stride + dx - pad);
          T* dst_row = dst + y * wo;
          std::fill(dst_row, dst_row + x_lo, T(0));
          std::fill(dst_row + x_hi, dst_row + wo, T(0));
          if (stride == 1) {
            std::copy_n(src, x_hi - x_lo, dst_row + x_lo);
          } else {
            for (std::size_t x = 0; x < x_hi - x_lo; ++x) {
              dst_row[x_lo + x] = src[x * stride];
            }
          }
        }
      }
    }
  }
}

/// Position-major variant: one (C*k*k)-long row per output position, i.e.
/// the transpose of im2col. Used by the weight-gradient GEMM.
template <typename T>
void im2col_t(const T* in, std::size_t c_in, std::size_t h, std::size_t w,
              std::size_t k, std::size_t stride, std::size_t pad,
              std::size_t ho, std::size_t wo, T* out) {
  const std::size_t ckk = c_in * k * k;
  std::fill(out, out + ho * wo * ckk, T(0));
  std::size_t col = 0;
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t dy = 0; dy < k; ++dy) {
      const auto [y_lo, y_hi] = valid_span(h, ho, stride, dy, pad);
      for (std::size_t dx = 0; dx < k; ++dx, ++col) {
        const auto [x_lo, x_hi] = valid_span(w, wo, stride, dx, pad);
        for (std::size_t y = y_lo; y < y_hi; ++y) {
          const std::size_t ys = y * stride + dy - pad;
          const T* src = in + (c * h + ys) * w + (x_lo * stride + dx - pad);
          T* dst = out + (y * wo + x_lo) * ckk + col;
          const std::size_t n = x_hi - x_lo;
          for (std::size_t x = 0; x < n; ++x) dst[x * ckk] = src[x * stride];
        }
      }
    }
  }
}

/// Adjoint of im2col: scatter-adds a (C*k*k) x (Ho*Wo) gradient back onto the
/// input plane.
template <typename T>
void col2im(const T* grad, std::size_t c_in, std::size_t h, std::size_t w,
            std::size_t k, std::size_t stride, std::size_t pad, std::size_t ho,
            std::size_t wo, T* out) {
  const std::size_t cols = ho * wo;
  std::size_t row = 0;
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t dy = 0; dy < k; ++dy) {
      const auto [y_lo, y_hi] = valid_span(h, ho, stride, dy, pad);
      for (std::size_t dx = 0; dx < k; ++dx, ++row) {
        const auto [x_lo, x_hi] = valid_span(w, wo, stride, dx, pad);
        const T* src = grad + row * cols;
        for (std::size_t y = y_lo; y < y_hi; ++y) {
          const std::size_t ys = y * stride + dy - pad;
          T* dst = out + (c * h + ys) * w + (x_lo * stride + dx - pad);
          const T* src_row = src + y * wo + x_lo;
          const std::size_t n = x_hi - x_lo;
          if (stride == 1) {
            for (std::size_t x = 0; x < n; ++x) dst[x] += src_row[x];
          } else {
            for (std::size_t x = 0; x < n; ++x) dst[x * stride] += src_row[x];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Same-padded 2-D convolution over an NCHW batch. Output spatial extent is
/// ceil(H/stride) x ceil(W/stride); padding is zero-fill with p = (k-1)/2.
template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const ConvParamsT<T>& p) {
  detail::validate_conv_args(input, p);
  const std::size_t n = input.extent(0), c_in = input.extent(1);
  const std::size_t h = input.extent(2), w = input.extent(3);
  const std::size_t c_out = p.weights.extent(0), k = p.weights.extent(2);
  const std::size_t s = p.stride, pad = (k - 1) / 2;
  const std::size_t ho = (h + s - 1) / s, wo = (w + s - 1) / s;
  const std::size_t ckk = c_in * k * k, hw = ho * wo;

  TensorT<T> out({n, c_out, ho, wo});
  detail::parallel_blocks(
      n, detail::kSampleBlocks, [&](std::size_t, std::size_t i0, std::size_t i1) {
        std::vector<T> patches(ckk * hw);
        for (std::size_t i = i0; i < i1; ++i) {
          detail::im2col(input.data() + i * c_in * h * w, c_in, h, w, k, s, pad,
                         ho, wo, patches.data());
          T* dst = out.data() + i * c_out * hw;
          detail::gemm(c_out, ckk, hw, p.weights.data(), patches.data(), dst);
          for (std::size_t o = 0; o < c_out; ++o) {
            const T b = p.bias[o];
            T* row = dst + o * hw;
            for (std::size_t j = 0; j < hw; ++j) row[j] += b;
          }
        }
      });
  return out;
}

/// Exact adjoints of conv2d_forward with respect to input, weights, and bias.
/// Weight and bias gradients are reduced over fixed sample blocks in block
/// order, so results do not depend on the number of worker threads.
template <typename T>
ConvGradsT<T> conv2d_backward(const TensorT<T>& input, const ConvParamsT<T>& p,
                              const TensorT<T>& upstream) {
  detail::validate_conv_args(input, p);
  const std::size_t n = input.extent(0), c_in = input.extent(1);
  const std::size_t h = input.extent(2), w = input.extent(3);
  const std::size_t c_out = p.weights.extent(0), k = p.weights.extent(2);
  const std::size_t s = p.stride, pad = (k - 1) / 2;
  const std::size_t ho = (h + s - 1) / s, wo = (w + s - 1) / s;
  const std::size_t ckk = c_in * k * k, hw = ho * wo;

  if (upstream.rank() != 4 || upstream.extent(0) != n ||
      upstream.extent(1) != c_out || upstream.extent(2) != ho ||
      upstream.extent(3) != wo) {
    throw std::invalid_argument("conv2d_backward: upstream shape mismatch");
  }

  ConvGradsT<T> grads{TensorT<T>(input.shape()), TensorT<T>(p.weights.shape()),
                      TensorT<T>(p.bias.shape())};

  const std::size_t nb = std::min<std::size_t>(detail::kSampleBlocks, n);
  // Per-block accumulators, merged in block order, keep the result
  // independent of the worker thread count.
  std::vector<std::vector<T>> wgrad_blocks(nb);
  std::vector<std::vector<double>> bgrad_blocks(nb);

  detail::parallel_blocks(
      n, nb, [&](std::size_t block, std::size_t i0, std::size_t i1) {
        auto& wg = wgrad_blocks[block];
        auto& bg = bgrad_blocks[block];
        wg.assign(c_out * ckk, T(0));
        bg.assign(c_out, 0.0);
        std::vector<T> patches_t(hw * ckk);
        std::vector<T> patch_grads(ckk * hw);
        for (std::size_t i = i0; i < i1; ++i) {
          const T* in_i = input.data() + i * c_in * h * w;
          const T* up_i = upstream.data() + i * c_out * hw;
          // d/dW: (c_out x hw) * (hw x ckk)
          detail::im2col_t(in_i, c_in, h, w, k, s, pad, ho, wo, patches_t.data());
          detail::gemm(c_out, hw, ckk, up_i, patches_t.data(), wg.data(), true);
          for (std::size_t o = 0; o < c_out; ++o) {
            double acc = 0.0;
            const T* row = up_i + o * hw;
            for (std::size_t j = 0; j < hw; ++j) acc += row[j];
            bg[o] += acc;
          }
          // d/dinput: W^T (ckk x c_out) * up (c_out x hw), then scatter.
          detail::gemm_at_b(ckk, c_out, hw, p.weights.data(), up_i,
                            patch_grads.data());
          detail::col2im(patch_grads.data(), c_in, h, w, k, s, pad, ho, wo,
                         grads.input.data() + i * c_in * h * w);
        }
      });

  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t j = 0; j < c_out * ckk; ++j) {
      grads.weights[j] += wgrad_blocks[b][j];
    }
    for (std::size_t o = 0; o < c_out; ++o) {
      grads.bias[o] += static_cast<T>(bgrad_blocks[b][o]);
    }
  }
  return grads;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& input) {
  TensorT<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    out[i] = input[i] > T(0) ? input[i] : T(0);
  }
  return out;
}

/// Subgradient at exactly 0 is taken as 0.
template <typename T>
TensorT<T> relu_backward(const TensorT<T>& input, const TensorT<T>& upstream) {
  if (!input.same_shape(upstream)) {
    throw std::invalid_argument("relu_backward: shape mismatch");
  }
  TensorT<T> grad(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    grad[i] = input[i] > T(0) ? upstream[i] : T(0);
  }
  return grad;
}

/// Elementwise sum of the two branch outputs. No activation is applied after
/// the sum; both branches receive the upstream gradient unchanged.
template <typename T>
TensorT<T> add_branches(const TensorT<T>& linear_out,
                        const TensorT<T>& nonlinear_out) {
  if (!linear_out.same_shape(nonlinear_out)) {
    throw std::invalid_argument("add_branches: shape mismatch " +
                                tandem::detail::shape_string(linear_out.shape()) +
                                " vs " +
                                tandem::detail::shape_string(nonlinear_out.shape()));
  }
  TensorT<T> out(linear_out.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = linear_out[i] + nonlinear_out[i];
  }
  return out;
}

/// Inverted dropout: in train mode each element is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate), so eval mode is the
/// identity. The returned mask is what backward multiplies by.
template <typename T>
DropoutResultT<T> dropout(const TensorT<T>& input, double rate, Mode mode,
                          Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout: rate must be in [0,1)");
  }
  if (mode == Mode::kEval || rate == 0.0) {
    return {input, TensorT<T>::full(input.shape(), T(1))};
  }
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  DropoutResultT<T> res{TensorT<T>(input.shape()), TensorT<T>(input.shape())};
  for (std::size_t i = 0; i < input.size(); ++i) {
    const T m = rng.next_double() < rate ? T(0) : keep_scale;
    res.mask[i] = m;
    res.output[i] = input[i] * m;
  }
  return res;
}

template <typename T>
TensorT<T> dropout_backward(const TensorT<T>& mask, const TensorT<T>& upstream) {
  if (!mask.same_shape(upstream)) {
    throw std::invalid_argument("dropout_backward: shape mismatch");
  }
  TensorT<T> grad(mask.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    grad[i] = mask[i] * upstream[i];
  }
  return grad;
}

/// Mean over spatial positions per channel: NCHW -> (N, C).
template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& input) {
  if (input.rank() != 4) {
    throw std::invalid_argument("global_avg_pool: input must be rank-4");
  }
  const std::size_t n = input.extent(0), c = input.extent(1);
  const std::size_t hw = input.extent(2) * input.extent(3);
  TensorT<T> out({n, c});
  const T* src = input.data();
  for (std::size_t i = 0; i < n * c; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < hw; ++j) acc += src[i * hw + j];
    out[i] = static_cast<T>(acc / static_cast<double>(hw));
  }
  return out;
}

template <typename T>
TensorT<T> global_avg_pool_backward(const TensorT<T>& upstream, std::size_t h,
                                    std::size_t w) {
  if (upstream.rank() != 2) {
    throw std::invalid_argument("global_avg_pool_backward: upstream must be rank-2");
  }
  const std::size_t n = upstream.extent(0), c = upstream.extent(1);
  TensorT<T> grad({n, c, h, w});
  const T scale = static_cast<T>(1.0 / static_cast<double>(h * w));
  for (std::size_t i = 0; i < n * c; ++i) {
    const T v = upstream[i] * scale;
    T* dst = grad.data() + i * h * w;
    std::fill(dst, dst + h * w, v);
  }
  return grad;
}

/// Affine map: (N x F) * (F x K) + bias.
template <typename T>
TensorT<T> dense(const TensorT<T>& input, const TensorT<T>& weights,
                 const TensorT<T>& bias) {
  if (input.rank() != 2 || weights.rank() != 2 || bias.rank() != 1 ||
      input.extent(1) != weights.extent(0) ||
      bias.extent(0) != weights.extent(1)) {
    throw std::invalid_argument("dense: dimension mismatch");
  }
  const std::size_t n = input.extent(0), f = input.extent(1),
                    k = weights.extent(1);
  TensorT<T> out({n, k});
  tandem::detail::gemm(n, f, k, input.data(), weights.data(), out.data());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) out.at(i, j) += bias[j];
  }
  return out;
}

template <typename T>
DenseGradsT<T> dense_backward(const TensorT<T>& input, const TensorT<T>& weights,
                              const TensorT<T>& upstream) {
  const std::size_t n = input.extent(0), f = input.extent(1),
                    k = weights.extent(1);
  if (upstream.rank() != 2 || upstream.extent(0) != n || upstream.extent(1) != k) {
    throw std::invalid_argument("dense_backward: upstream shape mismatch");
  }
  DenseGradsT<T> grads{TensorT<T>({n, f}), TensorT<T>({f, k}), TensorT<T>({k})};
  std::vector<T> weights_t(f * k);
  tandem::detail::transpose(f, k, weights.data(), weights_t.data());
  tandem::detail::gemm(n, k, f, upstream.data(), weights_t.data(),
                       grads.input.data());
  tandem::detail::gemm_at_b(f, n, k, input.data(), upstream.data(),
                            grads.weights.data());
  for (std::size_t j = 0; j < k; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += upstream.at(i, j);
    grads.bias[j] = static_cast<T>(acc);
  }
  return grads;
}

/// Max-subtracted softmax with mean cross-entropy over the batch.
/// logit_grad is (softmax - onehot) / N.
template <typename T>
SoftmaxLossT<T> softmax_cross_entropy(const TensorT<T>& logits,
                                      const std::vector<int>& labels) {
  if (logits.rank() != 2) {
    throw std::invalid_argument("softmax_cross_entropy: logits must be rank-2");
  }
  const std::size_t n = logits.extent(0), k = logits.extent(1);
  if (labels.size() != n) {
    throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
  }
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw std::invalid_argument("softmax_cross_entropy: label " +
                                  std::to_string(label) + " out of range [0," +
                                  std::to_string(k) + ")");
    }
  }
  SoftmaxLossT<T> res{0.0, TensorT<T>({n, k})};
  double loss_acc = 0.0;
  std::vector<double> row(k);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double max_z = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      max_z = std::max(max_z, static_cast<double>(logits.at(i, j)));
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      row[j] = std::exp(static_cast<double>(logits.at(i, j)) - max_z);
      sum += row[j];
    }
    const std::size_t label = static_cast<std::size_t>(labels[i]);
    loss_acc += -(std::log(row[label]) - std::log(sum));
    for (std::size_t j = 0; j < k; ++j) {
      double p = row[j] / sum;
      res.logit_grad.at(i, j) =
          static_cast<T>((p - (j == label ? 1.0 : 0.0)) * inv_n);
    }
  }
  res.mean_loss = loss_acc * inv_n;
  return res;
}

}  // namespace ops
}  // namespace tandem
