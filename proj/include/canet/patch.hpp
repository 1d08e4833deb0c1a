#pragma once

// ============================================================================
// Channel-independent patching and the dual embedding.
//
// patchify splits every (batch, channel) lane of [B, C, L] into N = ceil(L/p)
// contiguous patches of length p, giving [B*C, N, p] with instance index
// m = b*C + c.  When p does not divide L the lane is left-padded by
// replicating its first value, so the final patch always ends at the last
// observation.  The padding is part of the gather, hence differentiable: all
// padded slots scatter their gradient back onto the first element.
//
// dual_embed applies two independent affine projections [p -> D] to the same
// patches: one feeds the processing stream, the other the internal style
// path of the normalisation module.
// ============================================================================

#include <random>
#include <utility>

#include "canet/ops.hpp"
#include "canet/tensor.hpp"

namespace canet {

// [B, C, L] -> [B*C, N, p]
template <class T>
Tensor<T> patchify(const Tensor<T>& x, std::int64_t patch_len) {
  if (x.ndim() != 3) {
    throw shape_error("patchify expects [B, C, L], got " + format_shape(x.shape()));
  }
  if (patch_len < 1) {
    throw config_error("patch length must be >= 1, got " + std::to_string(patch_len));
  }
  const std::int64_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  const std::int64_t N = (L + patch_len - 1) / patch_len;
  const std::int64_t padded = N * patch_len;
  const std::int64_t pad = padded - L;

  // position t of the padded lane reads source index max(t - pad, 0)
  std::vector<std::int64_t> src(static_cast<std::size_t>(padded));
  for (std::int64_t t = 0; t < padded; ++t) {
    src[static_cast<std::size_t>(t)] = std::max<std::int64_t>(t - pad, 0);
  }

  const auto& xv = x.values();
  const std::int64_t M = B * C;
  std::vector<T> out(static_cast<std::size_t>(M * padded));
  for (std::int64_t m = 0; m < M; ++m) {
    const T* lane = xv.data() + m * L;
    T* olane = out.data() + m * padded;
    for (std::int64_t t = 0; t < padded; ++t) olane[t] = lane[src[static_cast<std::size_t>(t)]];
  }
  Tensor<T> y(Shape{M, N, patch_len}, std::move(out));

  if (detail::should_record<T>({&x})) {
    detail::record<T>({&y}, [xn = x.node(), yn = y.node(), src, M, L, padded]() {
      if (!xn->requires_grad) return;
      auto& gx = detail::ensure_grad(*xn);
      const auto& g = yn->grad;
      for (std::int64_t m = 0; m < M; ++m) {
        T* glane = gx.data() + m * L;
        const T* olane = g.data() + m * padded;
        for (std::int64_t t = 0; t < padded; ++t) glane[src[static_cast<std::size_t>(t)]] += olane[t];
      }
    });
  }
  return y;
}

template <class T>
struct DualEmbedding {
  Tensor<T> w_stream;  // [p, D]
  Tensor<T> b_stream;  // [D]
  Tensor<T> w_style;   // [p, D]
  Tensor<T> b_style;   // [D]
};

template <class T>
DualEmbedding<T> make_dual_embedding(std::int64_t patch_len, std::int64_t embed_dim,
                                     std::mt19937_64& rng) {
  const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(patch_len)));
  DualEmbedding<T> e;
  e.w_stream = Tensor<T>::uniform({patch_len, embed_dim}, -bound, bound, rng, true);
  e.b_stream = Tensor<T>::zeros({embed_dim}, true);
  e.w_style = Tensor<T>::uniform({patch_len, embed_dim}, -bound, bound, rng, true);
  e.b_style = Tensor<T>::zeros({embed_dim}, true);
  return e;
}

// patches [M, N, p] -> (stream [M, N, D], style [M, N, D])
template <class T>
std::pair<Tensor<T>, Tensor<T>> dual_embed(const Tensor<T>& patches,
                                           const DualEmbedding<T>& e) {
  auto stream = add(matmul(patches, e.w_stream), e.b_stream);
  auto style = add(matmul(patches, e.w_style), e.b_style);
  return {stream, style};
}

}  // namespace canet
