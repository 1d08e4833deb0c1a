#pragma once

// ============================================================================
// Stacked Kronecker Product Layer (SKPL).
//
// The dense head y = W x + bias with W: [m, n] is replaced by a sum of s
// Kronecker terms W = sum_k A_k (x) B_k with A_k: [m1, n1], B_k: [m2, n2],
// m1*m2 = m, n1*n2 = n.  The forward pass never materialises W: with
// row-major flattening, (A (x) B) vec(X) = vec(A X B^T) for X: [n1, n2], so
// each term costs two small matmuls.  Factor shapes come from
// choose_factor_shapes: the largest divisor <= ceil(sqrt(.)) of each axis
// (prime axes degrade to (1, p), i.e. a dense map on that axis).
// ============================================================================

#include <cmath>
#include <random>
#include <vector>

#include "canet/ops.hpp"
#include "canet/tensor.hpp"

namespace canet {

struct FactorShape {
  std::int64_t m1, m2;  // m1 * m2 = m
  std::int64_t n1, n2;  // n1 * n2 = n
};

// Largest divisor of v that is <= ceil(sqrt(v)).
inline std::int64_t balanced_divisor(std::int64_t v) {
  const auto cap = static_cast<std::int64_t>(
      std::ceil(std::sqrt(static_cast<double>(v))));
  std::int64_t best = 1;
  for (std::int64_t d = 1; d <= cap; ++d) {
    if (v % d == 0) best = d;
  }
  return best;
}

inline FactorShape choose_factor_shapes(std::int64_t m, std::int64_t n) {
  if (m < 1 || n < 1) {
    throw config_error("factor shapes need m, n >= 1, got m=" + std::to_string(m) +
                       " n=" + std::to_string(n));
  }
  FactorShape f;
  f.m1 = balanced_divisor(m);
  f.m2 = m / f.m1;
  f.n1 = balanced_divisor(n);
  f.n2 = n / f.n1;
  return f;
}

template <class T>
struct KronFactors {
  struct Term {
    Tensor<T> a;  // [m1, n1]
    Tensor<T> b;  // [m2, n2]
  };
  std::vector<Term> terms;  // s >= 1 entries
  Tensor<T> bias;           // [m]
  std::int64_t m = 0, n = 0;
  FactorShape shape{};
};

// Uniform(+-1/sqrt(fan_in_factor)) factors, zero bias.
template <class T>
KronFactors<T> make_kron_factors(std::int64_t m, std::int64_t n, std::int64_t s,
                                 std::mt19937_64& rng) {
  if (s < 1) {
    throw config_error("kron stack depth must be >= 1, got " + std::to_string(s));
  }
  KronFactors<T> f;
  f.m = m;
  f.n = n;
  f.shape = choose_factor_shapes(m, n);
  const T ba = static_cast<T>(1.0 / std::sqrt(static_cast<double>(f.shape.n1)));
  const T bb = static_cast<T>(1.0 / std::sqrt(static_cast<double>(f.shape.n2)));
  for (std::int64_t k = 0; k < s; ++k) {
    typename KronFactors<T>::Term t;
    t.a = Tensor<T>::uniform({f.shape.m1, f.shape.n1}, -ba, ba, rng, true);
    t.b = Tensor<T>::uniform({f.shape.m2, f.shape.n2}, -bb, bb, rng, true);
    f.terms.push_back(std::move(t));
  }
  f.bias = Tensor<T>::zeros({m}, true);
  return f;
}

// x: [..., n] -> [..., m];  y = sum_k (A_k (x) B_k) x + bias, term by term as
// A_k X B_k^T on the [n1, n2] reshape of each instance.
template <class T>
Tensor<T> skpl_forward(const Tensor<T>& x, const KronFactors<T>& f) {
  if (x.ndim() < 1 || x.dim(x.ndim() - 1) != f.n) {
    throw shape_error("skpl_forward expects trailing extent " + std::to_string(f.n) +
                      ", got " + format_shape(x.shape()));
  }
  const std::int64_t q = x.numel() / f.n;  // collapsed leading extent
  auto xr = reshape(x, {q, f.shape.n1, f.shape.n2});

  Tensor<T> acc;
  for (const auto& term : f.terms) {
    // [q, n1, n2] . [n2, m2] -> [q, n1, m2], then A . (...) -> [q, m1, m2]
    auto xb = matmul(xr, transpose(term.b, 0, 1));
    auto axb = matmul(term.a, xb);
    auto flat = reshape(axb, {q, f.m});
    acc = acc.defined() ? add(acc, flat) : flat;
  }
  acc = add(acc, f.bias);

  Shape oshape = x.shape();
  oshape.back() = f.m;
  return reshape(acc, std::move(oshape));
}

// Exact parameter counts for the accounting harness.
template <class T>
std::int64_t skpl_param_count(const KronFactors<T>& f) {
  std::int64_t total = f.m;  // bias
  for (const auto& term : f.terms) total += term.a.numel() + term.b.numel();
  return total;
}

inline std::int64_t skpl_param_count(std::int64_t m, std::int64_t n, std::int64_t s) {
  const FactorShape f = choose_factor_shapes(m, n);
  return s * (f.m1 * f.n1 + f.m2 * f.n2) + m;
}

inline std::int64_t dense_param_count(std::int64_t m, std::int64_t n) {
  return m * n + m;
}

}  // namespace canet
