#pragma once

// ============================================================================
// Spectral filtering: real FFT pair + Adaptive Spectral Block (ASB).
//
// A ComplexSpectrum is a pair of real tensors (re, im), so complex filter
// arithmetic decomposes into ordinary differentiable real ops and gradients
// flow through the tape with no special casing.
//
// Transform conventions (matched by the tests' Parseval/roundtrip oracles):
//   forward (rfft, unnormalised):  S_f = sum_t x_t e^{-2 pi i f t / N},
//     f = 0 .. N/2 (inclusive), i.e. F = N/2 + 1 bins along the time axis;
//   inverse (irfft, 1/N):          x_t = (1/N) sum_f w_f (re_f cos - im_f sin),
//     w_f = 1 at DC and (for even N) Nyquist, else 2 — the Hermitian
//     completion of the one-sided spectrum.  Imaginary parts at DC/Nyquist
//     are structurally ignored (their sin weight is zero).
//
// The transform is a direct O(N^2) DFT per lane: patch counts at this
// engine's scale are a few dozen, where the dense transform is both faster
// than an FFT plan and trivially differentiable.
//
// ASB (one per layer/resolution):
//   s       = rfft(x)                       x: [M, N, D]
//   e_f     = mean over (M, D) of |s_f|^2   per-frequency energy
//   m_f     = [ e_f / max e  >=  sigmoid(threshold_logit) ], DC always kept
//   y       = irfft(s * global + (s * m) * local) + x
// The mask is a hard gate computed from detached values: it is a constant in
// backward (straight-through on the kept bins).  Filters are complex [F, D];
// init is the identity (global = 1 + 0i, local = 0, threshold_logit = -2).
// ============================================================================

#include <cmath>
#include <memory>
#include <vector>

#include "canet/ops.hpp"
#include "canet/tensor.hpp"

namespace canet {

template <class T>
struct ComplexSpectrum {
  Tensor<T> re;     // [B, F, D]
  Tensor<T> im;     // [B, F, D]
  std::int64_t n;   // original time-axis length (needed by irfft)
};

namespace detail {

// cos/sin tables: tab[f * n + t] = trig(2 pi f t / n).
struct TrigTables {
  std::vector<double> cos_t, sin_t;
  std::int64_t f_bins, n;
};

inline std::shared_ptr<TrigTables> make_trig(std::int64_t n) {
  auto tab = std::make_shared<TrigTables>();
  tab->n = n;
  tab->f_bins = n / 2 + 1;
  tab->cos_t.resize(static_cast<std::size_t>(tab->f_bins * n));
  tab->sin_t.resize(static_cast<std::size_t>(tab->f_bins * n));
  for (std::int64_t f = 0; f < tab->f_bins; ++f) {
    for (std::int64_t t = 0; t < n; ++t) {
      const double ang = 2.0 * M_PI * static_cast<double>(f) *
                         static_cast<double>(t) / static_cast<double>(n);
      tab->cos_t[static_cast<std::size_t>(f * n + t)] = std::cos(ang);
      tab->sin_t[static_cast<std::size_t>(f * n + t)] = std::sin(ang);
    }
  }
  return tab;
}

// Hermitian completion weight of one-sided bin f.
inline double herm_weight(std::int64_t f, std::int64_t n) {
  if (f == 0) return 1.0;
  if (n % 2 == 0 && f == n / 2) return 1.0;
  return 2.0;
}

}  // namespace detail

// Real-to-complex DFT along axis 1 of [B, N, D].
template <class T>
ComplexSpectrum<T> rfft(const Tensor<T>& x) {
  if (x.ndim() != 3) {
    throw shape_error("rfft expects [B, N, D], got " + format_shape(x.shape()));
  }
  const std::int64_t B = x.dim(0), N = x.dim(1), D = x.dim(2);
  const std::int64_t F = N / 2 + 1;
  auto tab = detail::make_trig(N);

  const auto& xv = x.values();
  std::vector<T> re(static_cast<std::size_t>(B * F * D), T(0));
  std::vector<T> im(static_cast<std::size_t>(B * F * D), T(0));
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t f = 0; f < F; ++f) {
      const double* ct = tab->cos_t.data() + f * N;
      const double* st = tab->sin_t.data() + f * N;
      for (std::int64_t d = 0; d < D; ++d) {
        double r = 0.0, i = 0.0;
        for (std::int64_t t = 0; t < N; ++t) {
          const double v = static_cast<double>(xv[static_cast<std::size_t>((b * N + t) * D + d)]);
          r += v * ct[t];
          i -= v * st[t];
        }
        re[static_cast<std::size_t>((b * F + f) * D + d)] = static_cast<T>(r);
        im[static_cast<std::size_t>((b * F + f) * D + d)] = static_cast<T>(i);
      }
    }
  }
  ComplexSpectrum<T> out{Tensor<T>(Shape{B, F, D}, std::move(re)),
                         Tensor<T>(Shape{B, F, D}, std::move(im)), N};

  if (detail::should_record<T>({&x})) {
    detail::record<T>({&out.re, &out.im},
                      [xn = x.node(), rn = out.re.node(), in = out.im.node(),
                       tab, B, N, D, F]() {
      if (!xn->requires_grad) return;
      auto& gx = detail::ensure_grad(*xn);
      const auto& gr = rn->grad;
      const auto& gi = in->grad;
      for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t f = 0; f < F; ++f) {
          const double* ct = tab->cos_t.data() + f * N;
          const double* st = tab->sin_t.data() + f * N;
          for (std::int64_t d = 0; d < D; ++d) {
            const double greal = static_cast<double>(gr[static_cast<std::size_t>((b * F + f) * D + d)]);
            const double gimag = static_cast<double>(gi[static_cast<std::size_t>((b * F + f) * D + d)]);
            for (std::int64_t t = 0; t < N; ++t) {
              gx[static_cast<std::size_t>((b * N + t) * D + d)] +=
                  static_cast<T>(greal * ct[t] - gimag * st[t]);
            }
          }
        }
      }
    });
  }
  return out;
}

// One-sided complex-to-real inverse DFT back to [B, n, D].
template <class T>
Tensor<T> irfft(const ComplexSpectrum<T>& s) {
  const std::int64_t N = s.n;
  if (s.re.ndim() != 3 || s.im.ndim() != 3 || s.re.shape() != s.im.shape()) {
    throw shape_error("irfft expects matching [B, F, D] re/im, got " +
                      format_shape(s.re.shape()) + " and " + format_shape(s.im.shape()));
  }
  const std::int64_t B = s.re.dim(0), F = s.re.dim(1), D = s.re.dim(2);
  if (F != N / 2 + 1) {
    throw shape_error("irfft bin count " + std::to_string(F) +
                      " does not match time length " + std::to_string(N));
  }
  auto tab = detail::make_trig(N);
  std::vector<double> w(static_cast<std::size_t>(F));
  for (std::int64_t f = 0; f < F; ++f) w[static_cast<std::size_t>(f)] = detail::herm_weight(f, N);

  const auto& rv = s.re.values();
  const auto& iv = s.im.values();
  std::vector<T> out(static_cast<std::size_t>(B * N * D), T(0));
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t t = 0; t < N; ++t) {
      for (std::int64_t d = 0; d < D; ++d) {
        double acc = 0.0;
        for (std::int64_t f = 0; f < F; ++f) {
          const std::size_t idx = static_cast<std::size_t>((b * F + f) * D + d);
          acc += w[static_cast<std::size_t>(f)] *
                 (static_cast<double>(rv[idx]) * tab->cos_t[static_cast<std::size_t>(f * N + t)] -
                  static_cast<double>(iv[idx]) * tab->sin_t[static_cast<std::size_t>(f * N + t)]);
        }
        out[static_cast<std::size_t>((b * N + t) * D + d)] =
            static_cast<T>(acc / static_cast<double>(N));
      }
    }
  }
  Tensor<T> y(Shape{B, N, D}, std::move(out));

  if (detail::should_record<T>({&s.re, &s.im})) {
    detail::record<T>({&y}, [rn = s.re.node(), in = s.im.node(), yn = y.node(),
                             tab, w, B, N, D, F]() {
      const auto& g = yn->grad;
      const double invN = 1.0 / static_cast<double>(N);
      const bool need_r = rn->requires_grad, need_i = in->requires_grad;
      if (!need_r && !need_i) return;
      if (need_r) detail::ensure_grad(*rn);
      if (need_i) detail::ensure_grad(*in);
      for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t f = 0; f < F; ++f) {
          const double wf = w[static_cast<std::size_t>(f)] * invN;
          const double* ct = tab->cos_t.data() + f * N;
          const double* st = tab->sin_t.data() + f * N;
          for (std::int64_t d = 0; d < D; ++d) {
            double acc_r = 0.0, acc_i = 0.0;
            for (std::int64_t t = 0; t < N; ++t) {
              const double gv = static_cast<double>(g[static_cast<std::size_t>((b * N + t) * D + d)]);
              acc_r += gv * ct[t];
              acc_i -= gv * st[t];
            }
            const std::size_t idx = static_cast<std::size_t>((b * F + f) * D + d);
            if (need_r) rn->grad[idx] += static_cast<T>(wf * acc_r);
            if (need_i) in->grad[idx] += static_cast<T>(wf * acc_i);
          }
        }
      }
    });
  }
  return y;
}

// --------------------------------------------------------------------------
// Adaptive Spectral Block
// --------------------------------------------------------------------------

template <class T>
struct AsbParams {
  Tensor<T> global_re, global_im;  // [F, D]
  Tensor<T> local_re, local_im;    // [F, D]
  Tensor<T> threshold_logit;       // scalar
};

// Identity-initialised filters: global = 1 + 0i, local = 0, logit = -2.
template <class T>
AsbParams<T> make_asb_params(std::int64_t f_bins, std::int64_t embed_dim) {
  AsbParams<T> p;
  p.global_re = Tensor<T>::full({f_bins, embed_dim}, T(1), true);
  p.global_im = Tensor<T>::zeros({f_bins, embed_dim}, true);
  p.local_re = Tensor<T>::zeros({f_bins, embed_dim}, true);
  p.local_im = Tensor<T>::zeros({f_bins, embed_dim}, true);
  p.threshold_logit = Tensor<T>::scalar(T(-2), true);
  return p;
}

// Hard frequency gate from detached spectrum values: per-bin energy averaged
// over instances and channels, normalised by its max, compared against
// sigmoid(threshold_logit).  DC is always kept.  Returns one 0/1 per bin.
template <class T>
std::vector<T> asb_mask(const ComplexSpectrum<T>& s, T threshold_logit) {
  const std::int64_t B = s.re.dim(0), F = s.re.dim(1), D = s.re.dim(2);
  const auto& rv = s.re.values();
  const auto& iv = s.im.values();
  std::vector<double> energy(static_cast<std::size_t>(F), 0.0);
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t f = 0; f < F; ++f) {
      double acc = 0.0;
      for (std::int64_t d = 0; d < D; ++d) {
        const std::size_t idx = static_cast<std::size_t>((b * F + f) * D + d);
        acc += static_cast<double>(rv[idx]) * static_cast<double>(rv[idx]) +
               static_cast<double>(iv[idx]) * static_cast<double>(iv[idx]);
      }
      energy[static_cast<std::size_t>(f)] += acc;
    }
  }
  double peak = 0.0;
  for (auto& e : energy) {
    e /= static_cast<double>(B * D);
    peak = std::max(peak, e);
  }
  if (peak <= 0.0) peak = 1.0;  // all-zero input: only DC survives
  const double thr = 1.0 / (1.0 + std::exp(-static_cast<double>(threshold_logit)));
  std::vector<T> mask(static_cast<std::size_t>(F), T(0));
  for (std::int64_t f = 0; f < F; ++f) {
    mask[static_cast<std::size_t>(f)] = (energy[static_cast<std::size_t>(f)] / peak >= thr) ? T(1) : T(0);
  }
  mask[0] = T(1);
  return mask;
}

namespace detail {

// (a + bi)(c + di) with broadcast: returns (ac - bd, ad + bc).
template <class T>
std::pair<Tensor<T>, Tensor<T>> complex_mul(const Tensor<T>& ar, const Tensor<T>& ai,
                                            const Tensor<T>& br, const Tensor<T>& bi) {
  return {sub(mul(ar, br), mul(ai, bi)), add(mul(ar, bi), mul(ai, br))};
}

}  // namespace detail

// Forward pass of the block.  `mask_override` freezes the gate to an external
// 0/1 vector (used by gradient checks, where the input perturbation must not
// flip a bin mid-stencil); by default the mask is recomputed from the input.
template <class T>
Tensor<T> asb_forward(const Tensor<T>& x, const AsbParams<T>& p,
                      const std::vector<T>* mask_override = nullptr) {
  auto s = rfft(x);
  const std::int64_t F = s.re.dim(1);

  std::vector<T> mask_v = mask_override
                              ? *mask_override
                              : asb_mask(s, p.threshold_logit.values()[0]);
  if (static_cast<std::int64_t>(mask_v.size()) != F) {
    throw shape_error("asb mask length " + std::to_string(mask_v.size()) +
                      " does not match bin count " + std::to_string(F));
  }
  Tensor<T> mask(Shape{F, 1}, std::move(mask_v));  // constant: no grad

  auto [g_re, g_im] = detail::complex_mul(s.re, s.im, p.global_re, p.global_im);
  auto masked_re = mul(s.re, mask);
  auto masked_im = mul(s.im, mask);
  auto [l_re, l_im] = detail::complex_mul(masked_re, masked_im, p.local_re, p.local_im);

  ComplexSpectrum<T> filtered{add(g_re, l_re), add(g_im, l_im), s.n};
  return add(irfft(filtered), x);
}

}  // namespace canet
