#pragma once

// ============================================================================
// Interactive Convolutional Block (ICB).
//
// Two parallel 1-d convolutions over the patch axis (pointwise k=1 and local
// k=3 in the model) whose activations gate each other:
//
//   a = conv_a(x^T) + bias_a          x: [M, N, D], convs run on [M, D, N]
//   b = conv_b(x^T) + bias_b
//   y = conv_out( gelu(a) * drop(b) + gelu(b) * drop(a) ) + bias_out
//   out = y^T + x                     residual
//
// The cross-gating expression is symmetric in (a, b); with equal kernel
// widths, swapping the two conv parameter sets leaves the block unchanged
// (asserted in the tests for k=1 pairs).
// ============================================================================

#include <random>

#include "canet/ops.hpp"
#include "canet/tensor.hpp"

namespace canet {

template <class T>
struct IcbParams {
  Tensor<T> conv_a_w;    // [D, D, k_a]
  Tensor<T> conv_a_b;    // [D]
  Tensor<T> conv_b_w;    // [D, D, k_b]
  Tensor<T> conv_b_b;    // [D]
  Tensor<T> conv_out_w;  // [D, D, 1]
  Tensor<T> conv_out_b;  // [D]
  double dropout_p = 0.0;
};

// Uniform(+-1/sqrt(fan_in)) kernels, zero biases.
template <class T>
IcbParams<T> make_icb_params(std::int64_t embed_dim, double dropout_p,
                             std::mt19937_64& rng, std::int64_t k_a = 1,
                             std::int64_t k_b = 3) {
  auto kernel = [&](std::int64_t k) {
    const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(embed_dim * k)));
    return Tensor<T>::uniform({embed_dim, embed_dim, k}, -bound, bound, rng, true);
  };
  IcbParams<T> p;
  p.conv_a_w = kernel(k_a);
  p.conv_a_b = Tensor<T>::zeros({embed_dim}, true);
  p.conv_b_w = kernel(k_b);
  p.conv_b_b = Tensor<T>::zeros({embed_dim}, true);
  p.conv_out_w = kernel(1);
  p.conv_out_b = Tensor<T>::zeros({embed_dim}, true);
  p.dropout_p = dropout_p;
  return p;
}

namespace detail {

// bias [D] added across the time axis of [M, D, N].
template <class T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  return add(x, reshape(bias, {bias.numel(), 1}));
}

}  // namespace detail

// x: [M, N, D] -> [M, N, D].  In training mode an RNG stream is required
// whenever dropout_p > 0.
template <class T>
Tensor<T> icb_forward(const Tensor<T>& x, const IcbParams<T>& p, bool training,
                      std::mt19937_64* rng) {
  if (x.ndim() != 3) {
    throw shape_error("icb_forward expects [M, N, D], got " + format_shape(x.shape()));
  }
  auto xt = transpose(x, 1, 2);  // [M, D, N]
  auto a = detail::add_channel_bias(conv1d(xt, p.conv_a_w), p.conv_a_b);
  auto b = detail::add_channel_bias(conv1d(xt, p.conv_b_w), p.conv_b_b);
  auto cross = add(mul(gelu(a), dropout(b, p.dropout_p, training, rng)),
                   mul(gelu(b), dropout(a, p.dropout_p, training, rng)));
  auto y = detail::add_channel_bias(conv1d(cross, p.conv_out_w), p.conv_out_b);
  return add(transpose(y, 1, 2), x);
}

}  // namespace canet
