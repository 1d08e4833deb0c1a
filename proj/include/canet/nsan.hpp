#pragma once

// ============================================================================
// Non-stationary Adaptive Normalization (NSAN).
//
// Components:
//   * instance_stats    — per-instance/per-feature (mu, sigma) along the
//                         patch axis, sigma = sqrt(var + eps).
//   * style_blending_gate — mixes internal (style-embedding) statistics with
//                         external (raw-series) statistics:
//                           mu'_i   = mu_i  . W_mu_i      (feature-axis maps)
//                           mu_blend = alpha mu'_i + (1-alpha) mu'_e
//                           mu_style = mu_blend . shift_W + shift_b
//                           sigma_style = softplus(sigma_blend . scale_W
//                                                  + scale_b) + eps
//   * adain             — re-statistics the stream:
//                           z = sigma_style (x - mu_x)/sigma_x + mu_style.
//                         Internally the rescale runs in de-epsilon'd
//                         variance space (sigma^2 - eps on both sides), so
//                         measuring the output with instance_stats returns
//                         (mu_style, sigma_style) *exactly*, not exactly-
//                         up-to-eps.  Self-styling is still the identity.
//   * baseline_normalize — textbook layer/batch/instance norms (learnable
//                         gamma/beta, batch running buffers) used by the
//                         normalization comparison harness.
//   * demonstrate_collapse — executable witness that a plain z-score washes
//                         out affine non-stationarity: N(a x + b) == N(x).
// ============================================================================

#include <random>
#include <string>
#include <utility>

#include "canet/error.hpp"
#include "canet/ops.hpp"
#include "canet/tensor.hpp"

namespace canet {

// Statistics epsilon shared by every normalisation path in the model.
inline constexpr double kStatsEps = 1e-5;
// Floor applied to de-epsilon'd variances inside adain; only reached by
// degenerate (constant) lanes, for which no exactness is promised.
inline constexpr double kVarFloor = 1e-12;

template <class T>
struct StyleStats {
  Tensor<T> mu;     // [M, 1, D]
  Tensor<T> sigma;  // [M, 1, D], > 0
};

template <class T>
struct GateParams {
  Tensor<T> w_mu_i, w_sigma_i;  // [D, D] internal-statistics maps
  Tensor<T> w_mu_e, w_sigma_e;  // [D, D] external-statistics maps
  Tensor<T> shift_w;            // [D, D] ┐ affine shift head
  Tensor<T> shift_b;            // [D]    ┘
  Tensor<T> scale_w;            // [D, D] ┐ affine scale head (softplus'd)
  Tensor<T> scale_b;            // [D]    ┘
  double alpha = 0.5;           // blend ratio in [0, 1]; fixed hyperparameter
};

template <class T>
GateParams<T> make_gate_params(std::int64_t embed_dim, double alpha,
                               std::mt19937_64& rng) {
  if (alpha < 0.0 || alpha > 1.0) {
    throw config_error("blend ratio alpha must lie in [0, 1], got " +
                       std::to_string(alpha));
  }
  const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(embed_dim)));
  auto square = [&]() {
    return Tensor<T>::uniform({embed_dim, embed_dim}, -bound, bound, rng, true);
  };
  GateParams<T> g;
  g.w_mu_i = square();
  g.w_sigma_i = square();
  g.w_mu_e = square();
  g.w_sigma_e = square();
  g.shift_w = square();
  g.shift_b = Tensor<T>::zeros({embed_dim}, true);
  g.scale_w = square();
  g.scale_b = Tensor<T>::zeros({embed_dim}, true);
  g.alpha = alpha;
  return g;
}

// Per-instance statistics along the patch axis of [M, N, D].
template <class T>
StyleStats<T> instance_stats(const Tensor<T>& x) {
  if (x.ndim() != 3) {
    throw shape_error("instance_stats expects [M, N, D], got " + format_shape(x.shape()));
  }
  auto [mu, sigma] = reduce_stats(x, 1, /*keepdim=*/true, static_cast<T>(kStatsEps));
  return {mu, sigma};
}

template <class T>
StyleStats<T> style_blending_gate(const StyleStats<T>& internal,
                                  const StyleStats<T>& external,
                                  const GateParams<T>& g) {
  const T a = static_cast<T>(g.alpha);
  const T one_minus = static_cast<T>(1.0 - g.alpha);

  auto mu_i = matmul(internal.mu, g.w_mu_i);
  auto sig_i = matmul(internal.sigma, g.w_sigma_i);
  auto mu_e = matmul(external.mu, g.w_mu_e);
  auto sig_e = matmul(external.sigma, g.w_sigma_e);

  auto mu_blend = add(mul_scalar(mu_i, a), mul_scalar(mu_e, one_minus));
  auto sig_blend = add(mul_scalar(sig_i, a), mul_scalar(sig_e, one_minus));

  StyleStats<T> out;
  out.mu = add(matmul(mu_blend, g.shift_w), g.shift_b);
  out.sigma = add_scalar(softplus(add(matmul(sig_blend, g.scale_w), g.scale_b)),
                         static_cast<T>(kStatsEps));
  return out;
}

// Adaptive instance re-normalisation of the stream.
//
// The literal composition sigma_style * (x - mu)/sigma with eps-floored
// sigmas drifts the *measured* output statistics by O(eps/sigma); instead the
// scale factor is formed from the exact variances sigma^2 - eps on both
// sides, which cancels the convention and makes
//   instance_stats(adain(s, style)) == (style.mu, style.sigma)
// exact for non-degenerate streams.
template <class T>
Tensor<T> adain(const Tensor<T>& stream, const StyleStats<T>& style) {
  auto st = instance_stats(stream);
  const T eps = static_cast<T>(kStatsEps);
  const T floor = static_cast<T>(kVarFloor);
  auto var_stream = clamp_min(add_scalar(mul(st.sigma, st.sigma), -eps), floor);
  auto var_style = clamp_min(add_scalar(mul(style.sigma, style.sigma), -eps), floor);
  auto scale = sqrt(div(var_style, var_stream));
  return add(mul(sub(stream, st.mu), scale), style.mu);
}

// --------------------------------------------------------------------------
// Baseline normalizers (comparison harness)
// --------------------------------------------------------------------------

enum class NormKind { nsan, layer, batch, instance };

inline NormKind norm_kind_from_string(const std::string& s) {
  if (s == "nsan") return NormKind::nsan;
  if (s == "layer") return NormKind::layer;
  if (s == "batch") return NormKind::batch;
  if (s == "instance") return NormKind::instance;
  throw config_error("unknown norm kind '" + s + "' (expected nsan|layer|batch|instance)");
}

inline std::string norm_kind_to_string(NormKind k) {
  switch (k) {
    case NormKind::nsan: return "nsan";
    case NormKind::layer: return "layer";
    case NormKind::batch: return "batch";
    case NormKind::instance: return "instance";
  }
  throw config_error("invalid norm kind value");
}

template <class T>
struct NormParams {
  Tensor<T> gamma;         // [D], learnable
  Tensor<T> beta;          // [D], learnable
  Tensor<T> running_mean;  // [D], batch-norm buffer (not trainable)
  Tensor<T> running_var;   // [D], batch-norm buffer (not trainable)
  double momentum = 0.1;
};

template <class T>
NormParams<T> make_norm_params(std::int64_t embed_dim) {
  NormParams<T> p;
  p.gamma = Tensor<T>::full({embed_dim}, T(1), true);
  p.beta = Tensor<T>::zeros({embed_dim}, true);
  p.running_mean = Tensor<T>::zeros({embed_dim});
  p.running_var = Tensor<T>::full({embed_dim}, T(1));
  return p;
}

// Replacement buffer values produced by a batch-norm training step; the
// forward pass itself never mutates params (it stays a pure function), the
// caller decides when to commit.
template <class T>
struct BatchNormUpdate {
  std::vector<T> running_mean, running_var;
};

template <class T>
Tensor<T> baseline_normalize(const Tensor<T>& x, NormKind kind,
                             const NormParams<T>& p, bool training,
                             BatchNormUpdate<T>* update = nullptr) {
  if (x.ndim() != 3) {
    throw shape_error("baseline_normalize expects [M, N, D], got " + format_shape(x.shape()));
  }
  const T eps = static_cast<T>(kStatsEps);
  const std::int64_t M = x.dim(0), N = x.dim(1), D = x.dim(2);

  auto affine = [&](const Tensor<T>& xhat) {
    return add(mul(xhat, p.gamma), p.beta);  // gamma/beta broadcast over [.., D]
  };

  switch (kind) {
    case NormKind::layer: {
      auto [m, s] = reduce_stats(x, 2, true, eps);
      return affine(div(sub(x, m), s));
    }
    case NormKind::instance: {
      auto [m, s] = reduce_stats(x, 1, true, eps);
      return affine(div(sub(x, m), s));
    }
    case NormKind::batch: {
      if (training) {
        auto xr = reshape(x, {M * N, D});
        auto [m, s] = reduce_stats(xr, 0, true, eps);  // [1, D]
        if (update) {
          update->running_mean.resize(static_cast<std::size_t>(D));
          update->running_var.resize(static_cast<std::size_t>(D));
          const T mom = static_cast<T>(p.momentum);
          for (std::int64_t d = 0; d < D; ++d) {
            const T bm = m.values()[static_cast<std::size_t>(d)];
            const T sv = s.values()[static_cast<std::size_t>(d)];
            const T bv = sv * sv - eps;  // population variance
            update->running_mean[static_cast<std::size_t>(d)] =
                (T(1) - mom) * p.running_mean.values()[static_cast<std::size_t>(d)] + mom * bm;
            update->running_var[static_cast<std::size_t>(d)] =
                (T(1) - mom) * p.running_var.values()[static_cast<std::size_t>(d)] + mom * bv;
          }
        }
        return reshape(affine(div(sub(xr, m), s)), {M, N, D});
      }
      // eval: running statistics are constants
      std::vector<T> denom(static_cast<std::size_t>(D));
      for (std::int64_t d = 0; d < D; ++d) {
        denom[static_cast<std::size_t>(d)] = static_cast<T>(std::sqrt(
            static_cast<double>(p.running_var.values()[static_cast<std::size_t>(d)]) +
            static_cast<double>(eps)));
      }
      auto xhat = div(sub(x, p.running_mean), Tensor<T>(Shape{D}, std::move(denom)));
      return affine(xhat);
    }
    case NormKind::nsan:
      throw config_error("baseline_normalize does not implement 'nsan'; use the gate + adain path");
  }
  throw config_error("invalid norm kind value");
}

// --------------------------------------------------------------------------
// Lemma-1 witness
// --------------------------------------------------------------------------

// Exact (eps-free) z-score along the last axis; constant lanes map to zeros.
// Returns (N(x), N(a*x + b)); the two coincide for every a > 0 — the
// over-stationarization collapse this module exists to counteract.
template <class T>
std::pair<Tensor<T>, Tensor<T>> demonstrate_collapse(const Tensor<T>& x, T a, T b) {
  if (!(a > T(0))) {
    throw contract_error("demonstrate_collapse requires a > 0, got " + std::to_string(a));
  }
  auto zscore = [](const std::vector<T>& v, const Shape& shape) {
    const std::int64_t L = shape.back();
    const std::int64_t lanes = shape_numel(shape) / L;
    std::vector<T> out(v.size());
    for (std::int64_t lane = 0; lane < lanes; ++lane) {
      const T* src = v.data() + lane * L;
      double m = 0.0;
      for (std::int64_t t = 0; t < L; ++t) m += static_cast<double>(src[t]);
      m /= static_cast<double>(L);
      double var = 0.0;
      for (std::int64_t t = 0; t < L; ++t) {
        const double d = static_cast<double>(src[t]) - m;
        var += d * d;
      }
      var /= static_cast<double>(L);
      T* dst = out.data() + lane * L;
      if (var == 0.0) {
        for (std::int64_t t = 0; t < L; ++t) dst[t] = T(0);
      } else {
        const double inv = 1.0 / std::sqrt(var);
        for (std::int64_t t = 0; t < L; ++t) {
          dst[t] = static_cast<T>((static_cast<double>(src[t]) - m) * inv);
        }
      }
    }
    return out;
  };
  if (x.ndim() < 1) {
    throw shape_error("demonstrate_collapse needs at least one axis, got " +
                      format_shape(x.shape()));
  }
  std::vector<T> scaled(x.values().size());
  for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = a * x.values()[i] + b;
  return {Tensor<T>(x.shape(), zscore(x.values(), x.shape())),
          Tensor<T>(x.shape(), zscore(scaled, x.shape()))};
}

}  // namespace canet
