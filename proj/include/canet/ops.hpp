#pragma once

// ============================================================================
// Differentiable primitive operations on Tensor<T>.
//
// Every op follows the same pattern: compute the forward value eagerly, and
// if a tape is active and some input carries requires_grad, append a backward
// closure to the tape (see tensor.hpp for the gradient contract).  Broadcast
// semantics are NumPy's; gradients of broadcast inputs are sum-reduced over
// the stretched axes simply because the closure accumulates "+=" through the
// same index map used by the forward pass.
//
// Conventions worth calling out:
//   * matmul is batched: [..., m, k] x [..., k, n] with broadcast on the
//     leading dimensions.
//   * conv1d is cross-correlation (no kernel flip) over [B, C, N] with zero
//     "same" padding; kernel width must be odd.
//   * reduce_stats returns population mean and std = sqrt(var + eps) along
//     one axis, differentiable through both outputs.
//   * gelu uses the tanh approximation
//       0.5 * x * (1 + tanh(sqrt(2/pi) * (x + 0.044715 x^3))).
//   * dropout is "inverted": kept activations are scaled by 1/(1-p) during
//     training; eval is the identity.
// ============================================================================

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "canet/tensor.hpp"

namespace canet {

namespace detail {

// Offset of the element of a (possibly broadcast) input that corresponds to
// flat index `flat` of the output, given the output's row-major strides and
// the input's broadcast strides (0 on stretched axes).
inline std::int64_t map_offset(std::int64_t flat,
                               const std::vector<std::int64_t>& out_strides,
                               const std::vector<std::int64_t>& in_strides) {
  std::int64_t off = 0;
  for (std::size_t k = 0; k < out_strides.size(); ++k) {
    const std::int64_t c = flat / out_strides[k];
    flat -= c * out_strides[k];
    off += c * in_strides[k];
  }
  return off;
}

// Generic broadcasting binary elementwise op.  f(a,b) -> value;
// dfa/dfb(a,b,y) -> local partial w.r.t. a / b.
template <class T, class F, class DFA, class DFB>
Tensor<T> binary_elementwise(const Tensor<T>& a, const Tensor<T>& b, F f,
                             DFA dfa, DFB dfb) {
  const Shape oshape = broadcast_shape(a.shape(), b.shape());
  const auto ostr = row_major_strides(oshape);
  const auto astr = broadcast_strides(a.shape(), oshape);
  const auto bstr = broadcast_strides(b.shape(), oshape);
  const std::int64_t n = shape_numel(oshape);

  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<T> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] =
        f(av[static_cast<std::size_t>(map_offset(i, ostr, astr))],
          bv[static_cast<std::size_t>(map_offset(i, ostr, bstr))]);
  }
  Tensor<T> y(oshape, std::move(out));

  if (should_record<T>({&a, &b})) {
    record<T>({&y}, [an = a.node(), bn = b.node(), yn = y.node(), ostr, astr,
                     bstr, n, dfa, dfb]() {
      const auto& g = yn->grad;
      const auto& av2 = an->value;
      const auto& bv2 = bn->value;
      const auto& yv = yn->value;
      if (an->requires_grad) {
        auto& ga = ensure_grad(*an);
        for (std::int64_t i = 0; i < n; ++i) {
          const auto ia = static_cast<std::size_t>(map_offset(i, ostr, astr));
          const auto ib = static_cast<std::size_t>(map_offset(i, ostr, bstr));
          ga[ia] += g[static_cast<std::size_t>(i)] *
                    dfa(av2[ia], bv2[ib], yv[static_cast<std::size_t>(i)]);
        }
      }
      if (bn->requires_grad) {
        auto& gb = ensure_grad(*bn);
        for (std::int64_t i = 0; i < n; ++i) {
          const auto ia = static_cast<std::size_t>(map_offset(i, ostr, astr));
          const auto ib = static_cast<std::size_t>(map_offset(i, ostr, bstr));
          gb[ib] += g[static_cast<std::size_t>(i)] *
                    dfb(av2[ia], bv2[ib], yv[static_cast<std::size_t>(i)]);
        }
      }
    });
  }
  return y;
}

// Generic unary elementwise op.  df(x, y) -> dy/dx.
template <class T, class F, class DF>
Tensor<T> unary_elementwise(const Tensor<T>& x, F f, DF df) {
  const auto& xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  Tensor<T> y(x.shape(), std::move(out));

  if (should_record<T>({&x})) {
    record<T>({&y}, [xn = x.node(), yn = y.node(), df]() {
      if (!xn->requires_grad) return;
      auto& gx = ensure_grad(*xn);
      const auto& g = yn->grad;
      for (std::size_t i = 0; i < gx.size(); ++i) {
        gx[i] += g[i] * df(xn->value[i], yn->value[i]);
      }
    });
  }
  return y;
}

}  // namespace detail

// --------------------------------------------------------------------------
// Elementwise arithmetic (broadcasting)
// --------------------------------------------------------------------------

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_elementwise(
      a, b, [](T x, T y) { return x + y; }, [](T, T, T) { return T(1); },
      [](T, T, T) { return T(1); });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_elementwise(
      a, b, [](T x, T y) { return x - y; }, [](T, T, T) { return T(1); },
      [](T, T, T) { return T(-1); });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_elementwise(
      a, b, [](T x, T y) { return x * y; }, [](T, T y, T) { return y; },
      [](T x, T, T) { return x; });
}

template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_elementwise(
      a, b, [](T x, T y) { return x / y; },
      [](T, T y, T) { return T(1) / y; },
      [](T, T y, T out) { return -out / y; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  return detail::unary_elementwise(
      x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> mul_scalar(const Tensor<T>& x, T c) {
  return detail::unary_elementwise(
      x, [c](T v) { return v * c; }, [c](T, T) { return c; });
}

template <class T>
Tensor<T> neg(const Tensor<T>& x) {
  return mul_scalar(x, T(-1));
}

// --------------------------------------------------------------------------
// Nonlinearities
// --------------------------------------------------------------------------

// gelu(x) = 0.5 * x * (1 + tanh(sqrt(2/pi) * (x + 0.044715 x^3)))
template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr double kAlpha = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kCubic = 0.044715;
  return detail::unary_elementwise(
      x,
      [](T v) {
        const double xv = static_cast<double>(v);
        const double u = kAlpha * (xv + kCubic * xv * xv * xv);
        return static_cast<T>(0.5 * xv * (1.0 + std::tanh(u)));
      },
      [](T v, T) {
        const double xv = static_cast<double>(v);
        const double u = kAlpha * (xv + kCubic * xv * xv * xv);
        const double t = std::tanh(u);
        const double du = kAlpha * (1.0 + 3.0 * kCubic * xv * xv);
        return static_cast<T>(0.5 * (1.0 + t) + 0.5 * xv * (1.0 - t * t) * du);
      });
}

// Numerically stable softplus: max(x,0) + log1p(exp(-|x|)); d/dx = sigmoid(x).
template <class T>
Tensor<T> softplus(const Tensor<T>& x) {
  return detail::unary_elementwise(
      x,
      [](T v) {
        const double xv = static_cast<double>(v);
        return static_cast<T>(std::max(xv, 0.0) + std::log1p(std::exp(-std::abs(xv))));
      },
      [](T v, T) {
        const double xv = static_cast<double>(v);
        const double s = xv >= 0.0 ? 1.0 / (1.0 + std::exp(-xv))
                                   : std::exp(xv) / (1.0 + std::exp(xv));
        return static_cast<T>(s);
      });
}

template <class T>
Tensor<T> sqrt(const Tensor<T>& x) {
  return detail::unary_elementwise(
      x, [](T v) { return static_cast<T>(std::sqrt(static_cast<double>(v))); },
      [](T, T y) { return T(0.5) / y; });
}

// max(x, c); the gradient passes only where x >= c (zero in the clamped
// region).
template <class T>
Tensor<T> clamp_min(const Tensor<T>& x, T c) {
  return detail::unary_elementwise(
      x, [c](T v) { return v < c ? c : v; },
      [c](T v, T) { return v >= c ? T(1) : T(0); });
}

// --------------------------------------------------------------------------
// matmul
// --------------------------------------------------------------------------

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() < 2 || b.ndim() < 2) {
    throw shape_error("matmul requires rank >= 2 operands, got " +
                      format_shape(a.shape()) + " and " + format_shape(b.shape()));
  }
  const std::int64_t m = a.dim(a.ndim() - 2);
  const std::int64_t k = a.dim(a.ndim() - 1);
  const std::int64_t k2 = b.dim(b.ndim() - 2);
  const std::int64_t n = b.dim(b.ndim() - 1);
  if (k != k2) {
    throw shape_error("matmul inner dimensions disagree: " +
                      format_shape(a.shape()) + " x " + format_shape(b.shape()));
  }
  const Shape lead_a(a.shape().begin(), a.shape().end() - 2);
  const Shape lead_b(b.shape().begin(), b.shape().end() - 2);
  const Shape batch = broadcast_shape(lead_a, lead_b);  // throws on mismatch
  Shape oshape = batch;
  oshape.push_back(m);
  oshape.push_back(n);

  // Strides over the batch cells; multiplying by the matrix size converts a
  // cell index into an element offset.
  const auto batch_str = row_major_strides(batch);
  const auto a_cells = broadcast_strides(lead_a, batch);
  const auto b_cells = broadcast_strides(lead_b, batch);
  const std::int64_t cells = shape_numel(batch);
  const std::int64_t asz = m * k, bsz = k * n, osz = m * n;

  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<T> out(static_cast<std::size_t>(cells * osz), T(0));
  for (std::int64_t c = 0; c < cells; ++c) {
    const T* pa = av.data() + detail::map_offset(c, batch_str, a_cells) * asz;
    const T* pb = bv.data() + detail::map_offset(c, batch_str, b_cells) * bsz;
    T* po = out.data() + c * osz;
    for (std::int64_t i = 0; i < m; ++i) {
      for (std::int64_t kk = 0; kk < k; ++kk) {
        const T aik = pa[i * k + kk];
        const T* brow = pb + kk * n;
        T* orow = po + i * n;
        for (std::int64_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
      }
    }
  }
  Tensor<T> y(std::move(oshape), std::move(out));

  if (detail::should_record<T>({&a, &b})) {
    detail::record<T>({&y}, [an = a.node(), bn = b.node(), yn = y.node(),
                             batch_str, a_cells, b_cells, cells, m, n, k, asz,
                             bsz, osz]() {
      const auto& g = yn->grad;
      for (std::int64_t c = 0; c < cells; ++c) {
        const std::int64_t aoff = detail::map_offset(c, batch_str, a_cells) * asz;
        const std::int64_t boff = detail::map_offset(c, batch_str, b_cells) * bsz;
        const T* pg = g.data() + c * osz;
        const T* pa = an->value.data() + aoff;
        const T* pb = bn->value.data() + boff;
        if (an->requires_grad) {
          T* ga = detail::ensure_grad(*an).data() + aoff;
          // dL/dA = dL/dY . B^T
          for (std::int64_t i = 0; i < m; ++i) {
            for (std::int64_t kk = 0; kk < k; ++kk) {
              T acc = T(0);
              const T* grow = pg + i * n;
              const T* brow = pb + kk * n;
              for (std::int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              ga[i * k + kk] += acc;
            }
          }
        }
        if (bn->requires_grad) {
          T* gb = detail::ensure_grad(*bn).data() + boff;
          // dL/dB = A^T . dL/dY
          for (std::int64_t i = 0; i < m; ++i) {
            const T* grow = pg + i * n;
            for (std::int64_t kk = 0; kk < k; ++kk) {
              const T aik = pa[i * k + kk];
              T* gbrow = gb + kk * n;
              for (std::int64_t j = 0; j < n; ++j) gbrow[j] += aik * grow[j];
            }
          }
        }
      }
    });
  }
  return y;
}

// --------------------------------------------------------------------------
// conv1d
// --------------------------------------------------------------------------

// Cross-correlation over the last axis of x: [B, C_in, N] * [C_out, C_in, k]
// -> [B, C_out, N], zero "same" padding, odd kernel width required.
template <class T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w) {
  if (x.ndim() != 3 || w.ndim() != 3) {
    throw shape_error("conv1d expects input [B, C_in, N] and kernel "
                      "[C_out, C_in, k], got " + format_shape(x.shape()) +
                      " and " + format_shape(w.shape()));
  }
  const std::int64_t B = x.dim(0), Cin = x.dim(1), N = x.dim(2);
  const std::int64_t Cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != Cin) {
    throw shape_error("conv1d channel mismatch: input " + format_shape(x.shape()) +
                      " vs kernel " + format_shape(w.shape()));
  }
  if (k % 2 == 0) {
    throw shape_error("conv1d kernel width must be odd for same padding, got " +
                      format_shape(w.shape()));
  }
  const std::int64_t P = (k - 1) / 2;

  const auto& xv = x.values();
  const auto& wv = w.values();
  std::vector<T> out(static_cast<std::size_t>(B * Cout * N), T(0));
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t o = 0; o < Cout; ++o) {
      T* orow = out.data() + (b * Cout + o) * N;
      for (std::int64_t c = 0; c < Cin; ++c) {
        const T* xrow = xv.data() + (b * Cin + c) * N;
        const T* wrow = wv.data() + (o * Cin + c) * k;
        for (std::int64_t j = 0; j < k; ++j) {
          const T wj = wrow[j];
          const std::int64_t lo = std::max<std::int64_t>(0, P - j);
          const std::int64_t hi = std::min(N, N + P - j);
          for (std::int64_t t = lo; t < hi; ++t) orow[t] += wj * xrow[t + j - P];
        }
      }
    }
  }
  Tensor<T> y(Shape{B, Cout, N}, std::move(out));

  if (detail::should_record<T>({&x, &w})) {
    detail::record<T>({&y}, [xn = x.node(), wn = w.node(), yn = y.node(), B,
                             Cin, Cout, N, k, P]() {
      const auto& g = yn->grad;
      if (xn->requires_grad) {
        auto& gx = detail::ensure_grad(*xn);
        for (std::int64_t b = 0; b < B; ++b) {
          for (std::int64_t o = 0; o < Cout; ++o) {
            const T* grow = g.data() + (b * Cout + o) * N;
            for (std::int64_t c = 0; c < Cin; ++c) {
              T* gxrow = gx.data() + (b * Cin + c) * N;
              const T* wrow = wn->value.data() + (o * Cin + c) * k;
              for (std::int64_t j = 0; j < k; ++j) {
                const T wj = wrow[j];
                const std::int64_t lo = std::max<std::int64_t>(0, P - j);
                const std::int64_t hi = std::min(N, N + P - j);
                for (std::int64_t t = lo; t < hi; ++t) gxrow[t + j - P] += wj * grow[t];
              }
            }
          }
        }
      }
      if (wn->requires_grad) {
        auto& gw = detail::ensure_grad(*wn);
        for (std::int64_t b = 0; b < B; ++b) {
          for (std::int64_t o = 0; o < Cout; ++o) {
            const T* grow = g.data() + (b * Cout + o) * N;
            for (std::int64_t c = 0; c < Cin; ++c) {
              const T* xrow = xn->value.data() + (b * Cin + c) * N;
              T* gwrow = gw.data() + (o * Cin + c) * k;
              for (std::int64_t j = 0; j < k; ++j) {
                T acc = T(0);
                const std::int64_t lo = std::max<std::int64_t>(0, P - j);
                const std::int64_t hi = std::min(N, N + P - j);
                for (std::int64_t t = lo; t < hi; ++t) acc += grow[t] * xrow[t + j - P];
                gwrow[j] += acc;
              }
            }
          }
        }
      }
    });
  }
  return y;
}

// --------------------------------------------------------------------------
// Reductions
// --------------------------------------------------------------------------

namespace detail {

inline Shape reduced_shape(const Shape& s, std::int64_t axis, bool keepdim) {
  Shape out = s;
  if (keepdim) {
    out[static_cast<std::size_t>(axis)] = 1;
  } else {
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  return out;
}

inline void check_axis(const Shape& s, std::int64_t axis, const char* op) {
  if (axis < 0 || axis >= static_cast<std::int64_t>(s.size())) {
    throw shape_error(std::string(op) + ": axis " + std::to_string(axis) +
                      " out of range for shape " + format_shape(s));
  }
}

}  // namespace detail

// Population mean and std = sqrt(var + eps) along `axis`.  Differentiable
// through both outputs:
//   d mean[j] / d x[i] = 1/N
//   d std[j]  / d x[i] = (x[i] - mean[j]) / (N * std[j])
template <class T>
std::pair<Tensor<T>, Tensor<T>> reduce_stats(const Tensor<T>& x,
                                             std::int64_t axis,
                                             bool keepdim = true,
                                             T eps = T(1e-5)) {
  detail::check_axis(x.shape(), axis, "reduce_stats");
  const Shape kshape = detail::reduced_shape(x.shape(), axis, true);
  const Shape oshape = detail::reduced_shape(x.shape(), axis, keepdim);
  const std::int64_t N = x.dim(axis);
  const std::int64_t onumel = shape_numel(kshape);

  // x flat index -> reduced flat index (keepdim layout == squeezed layout).
  const auto xstr = row_major_strides(x.shape());
  const auto ostr = broadcast_strides(kshape, x.shape());

  const auto& xv = x.values();
  std::vector<T> mean(static_cast<std::size_t>(onumel), T(0));
  std::vector<T> stdv(static_cast<std::size_t>(onumel), T(0));
  for (std::size_t i = 0; i < xv.size(); ++i) {
    mean[static_cast<std::size_t>(
        detail::map_offset(static_cast<std::int64_t>(i), xstr, ostr))] += xv[i];
  }
  for (auto& v : mean) v /= static_cast<T>(N);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const auto j = static_cast<std::size_t>(
        detail::map_offset(static_cast<std::int64_t>(i), xstr, ostr));
    const T d = xv[i] - mean[j];
    stdv[j] += d * d;
  }
  for (auto& v : stdv) {
    v = static_cast<T>(std::sqrt(static_cast<double>(v) / static_cast<double>(N) +
                                 static_cast<double>(eps)));
  }

  Tensor<T> m(oshape, std::move(mean));
  Tensor<T> s(oshape, std::move(stdv));

  if (detail::should_record<T>({&x})) {
    detail::record<T>({&m, &s}, [xn = x.node(), mn = m.node(), sn = s.node(),
                                 xstr, ostr, N]() {
      if (!xn->requires_grad) return;
      auto& gx = detail::ensure_grad(*xn);
      const auto& gm = mn->grad;
      const auto& gs = sn->grad;
      const T invN = T(1) / static_cast<T>(N);
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const auto j = static_cast<std::size_t>(
            detail::map_offset(static_cast<std::int64_t>(i), xstr, ostr));
        gx[i] += gm[j] * invN +
                 gs[j] * (xn->value[i] - mn->value[j]) * invN / sn->value[j];
      }
    });
  }
  return {m, s};
}

template <class T>
Tensor<T> mean_axis(const Tensor<T>& x, std::int64_t axis, bool keepdim = false) {
  detail::check_axis(x.shape(), axis, "mean_axis");
  const Shape kshape = detail::reduced_shape(x.shape(), axis, true);
  const Shape oshape = detail::reduced_shape(x.shape(), axis, keepdim);
  const std::int64_t N = x.dim(axis);
  const auto xstr = row_major_strides(x.shape());
  const auto ostr = broadcast_strides(kshape, x.shape());

  const auto& xv = x.values();
  std::vector<T> out(static_cast<std::size_t>(shape_numel(kshape)), T(0));
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[static_cast<std::size_t>(
        detail::map_offset(static_cast<std::int64_t>(i), xstr, ostr))] += xv[i];
  }
  for (auto& v : out) v /= static_cast<T>(N);
  Tensor<T> y(oshape, std::move(out));

  if (detail::should_record<T>({&x})) {
    detail::record<T>({&y}, [xn = x.node(), yn = y.node(), xstr, ostr, N]() {
      if (!xn->requires_grad) return;
      auto& gx = detail::ensure_grad(*xn);
      const auto& g = yn->grad;
      const T invN = T(1) / static_cast<T>(N);
      for (std::size_t i = 0; i < gx.size(); ++i) {
        gx[i] += g[static_cast<std::size_t>(detail::map_offset(
                    static_cast<std::int64_t>(i), xstr, ostr))] * invN;
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> sum_all(const Tensor<T>& x) {
  const auto& xv = x.values();
  T acc = T(0);
  for (T v : xv) acc += v;
  Tensor<T> y = Tensor<T>::scalar(acc);

  if (detail::should_record<T>({&x})) {
    detail::record<T>({&y}, [xn = x.node(), yn = y.node()]() {
      if (!xn->requires_grad) return;
      auto& gx = detail::ensure_grad(*xn);
      const T g = yn->grad[0];
      for (auto& v : gx) v += g;
    });
  }
  return y;
}

// --------------------------------------------------------------------------
// Shape manipulation
// --------------------------------------------------------------------------

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.numel()) {
    throw shape_error("reshape from " + format_shape(x.shape()) + " to " +
                      format_shape(new_shape) + " changes element count");
  }
  Tensor<T> y(std::move(new_shape), x.values());
  if (detail::should_record<T>({&x})) {
    detail::record<T>({&y}, [xn = x.node(), yn = y.node()]() {
      if (!xn->requires_grad) return;
      auto& gx = detail::ensure_grad(*xn);
      const auto& g = yn->grad;
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    });
  }
  return y;
}

// Swap two axes.
template <class T>
Tensor<T> transpose(const Tensor<T>& x, std::int64_t d0, std::int64_t d1) {
  detail::check_axis(x.shape(), d0, "transpose");
  detail::check_axis(x.shape(), d1, "transpose");
  Shape oshape = x.shape();
  std::swap(oshape[static_cast<std::size_t>(d0)], oshape[static_cast<std::size_t>(d1)]);
  const auto ostr = row_major_strides(oshape);
  // Stride of the source tensor along each axis of the output.
  auto src = row_major_strides(x.shape());
  std::swap(src[static_cast<std::size_t>(d0)], src[static_cast<std::size_t>(d1)]);

  const auto& xv = x.values();
  const std::int64_t n = x.numel();
  std::vector<T> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] =
        xv[static_cast<std::size_t>(detail::map_offset(i, ostr, src))];
  }
  Tensor<T> y(std::move(oshape), std::move(out));

  if (detail::should_record<T>({&x})) {
    detail::record<T>({&y}, [xn = x.node(), yn = y.node(), ostr, src, n]() {
      if (!xn->requires_grad) return;
      auto& gx = detail::ensure_grad(*xn);
      const auto& g = yn->grad;
      for (std::int64_t i = 0; i < n; ++i) {
        gx[static_cast<std::size_t>(detail::map_offset(i, ostr, src))] +=
            g[static_cast<std::size_t>(i)];
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::int64_t axis) {
  if (xs.empty()) throw shape_error("concat of zero tensors");
  const Shape& first = xs[0].shape();
  detail::check_axis(first, axis, "concat");
  Shape oshape = first;
  std::int64_t total = 0;
  for (const auto& t : xs) {
    if (t.ndim() != xs[0].ndim()) {
      throw shape_error("concat rank mismatch: " + format_shape(first) + " vs " +
                        format_shape(t.shape()));
    }
    for (std::int64_t d = 0; d < t.ndim(); ++d) {
      if (d != axis && t.dim(d) != first[static_cast<std::size_t>(d)]) {
        throw shape_error("concat shape mismatch off axis " + std::to_string(axis) +
                          ": " + format_shape(first) + " vs " + format_shape(t.shape()));
      }
    }
    total += t.dim(axis);
  }
  oshape[static_cast<std::size_t>(axis)] = total;

  // outer x (axis block) x inner layout
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t d = 0; d < axis; ++d) outer *= first[static_cast<std::size_t>(d)];
  for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < first.size(); ++d)
    inner *= first[d];

  std::vector<T> out(static_cast<std::size_t>(outer * total * inner));
  std::vector<std::int64_t> offsets;  // running offset of each part along axis
  {
    std::int64_t off = 0;
    for (const auto& t : xs) {
      offsets.push_back(off);
      const std::int64_t ax = t.dim(axis);
      const auto& tv = t.values();
      for (std::int64_t o = 0; o < outer; ++o) {
        std::copy(tv.begin() + o * ax * inner, tv.begin() + (o + 1) * ax * inner,
                  out.begin() + (o * total + off) * inner);
      }
      off += ax;
    }
  }
  Tensor<T> y(std::move(oshape), std::move(out));

  std::vector<const Tensor<T>*> ptrs;
  for (const auto& t : xs) ptrs.push_back(&t);
  bool rec = false;
  if (current_tape<T>()) {
    for (const auto* p : ptrs) rec = rec || p->requires_grad();
  }
  if (rec) {
    std::vector<std::shared_ptr<TensorNode<T>>> nodes;
    for (const auto& t : xs) nodes.push_back(t.node());
    detail::record<T>({&y}, [nodes, yn = y.node(), offsets, outer, inner, total,
                             axis]() {
      const auto& g = yn->grad;
      for (std::size_t p = 0; p < nodes.size(); ++p) {
        auto& node = *nodes[p];
        if (!node.requires_grad) continue;
        auto& gx = detail::ensure_grad(node);
        const std::int64_t ax = node.shape[static_cast<std::size_t>(axis)];
        for (std::int64_t o = 0; o < outer; ++o) {
          const T* src = g.data() + (o * total + offsets[p]) * inner;
          T* dst = gx.data() + o * ax * inner;
          for (std::int64_t i = 0; i < ax * inner; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return y;
}

// --------------------------------------------------------------------------
// Dropout
// --------------------------------------------------------------------------

// Inverted dropout: during training each element survives with probability
// 1-p and is scaled by 1/(1-p); expectation is the identity.  Outside
// training (or p == 0) the input tensor is returned unchanged.
template <class T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training,
                  std::mt19937_64* rng) {
  if (p < 0.0 || p >= 1.0) {
    throw config_error("dropout probability must lie in [0, 1), got " +
                       std::to_string(p));
  }
  if (!training || p == 0.0) return x;
  if (!rng) {
    throw contract_error("dropout in training mode requires an RNG stream");
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  auto mask = std::make_shared<std::vector<T>>(x.values().size());
  for (auto& v : *mask) v = u(*rng) >= p ? scale : T(0);

  const auto& xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * (*mask)[i];
  Tensor<T> y(x.shape(), std::move(out));

  if (detail::should_record<T>({&x})) {
    detail::record<T>({&y}, [xn = x.node(), yn = y.node(), mask]() {
      if (!xn->requires_grad) return;
      auto& gx = detail::ensure_grad(*xn);
      const auto& g = yn->grad;
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * (*mask)[i];
    });
  }
  return y;
}

}  // namespace canet
