#pragma once

// Shared helpers for the test-suite: random tensor builders and small,
// deliberately naive reference implementations (independent oracles) that the
// library results are compared against.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "canet/dataset.hpp"
#include "canet/tensor.hpp"

namespace testutil {

inline std::mt19937_64 rng(std::uint64_t seed = 1234) {
  return std::mt19937_64(seed);
}

template <class T>
canet::Tensor<T> random_tensor(canet::Shape shape, std::mt19937_64& eng,
                               double lo = -1.0, double hi = 1.0,
                               bool requires_grad = false) {
  return canet::Tensor<T>::uniform(std::move(shape), static_cast<T>(lo),
                                   static_cast<T>(hi), eng, requires_grad);
}

template <class T>
void expect_all_near(const std::vector<T>& got, const std::vector<T>& want,
                     double tol, const char* what = "") {
  ASSERT_EQ(got.size(), want.size()) << what;
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_NEAR(static_cast<double>(got[i]), static_cast<double>(want[i]), tol)
        << what << " at flat index " << i;
  }
}

// ---------------------------------------------------------------------------
// Independent oracles
// ---------------------------------------------------------------------------

// Plain triple-loop matrix product of row-major [m,k] x [k,n].
inline std::vector<double> matmul_oracle(const std::vector<double>& a,
                                         const std::vector<double>& b,
                                         std::int64_t m, std::int64_t k,
                                         std::int64_t n) {
  std::vector<double> y(static_cast<std::size_t>(m * n), 0.0);
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      for (std::int64_t kk = 0; kk < k; ++kk)
        y[static_cast<std::size_t>(i * n + j)] +=
            a[static_cast<std::size_t>(i * k + kk)] *
            b[static_cast<std::size_t>(kk * n + j)];
  return y;
}

// Sliding-window cross-correlation with zero same-padding over one channel
// pair; x is length N, w is length k (odd).
inline std::vector<double> conv1d_lane_oracle(const std::vector<double>& x,
                                              const std::vector<double>& w) {
  const std::int64_t N = static_cast<std::int64_t>(x.size());
  const std::int64_t k = static_cast<std::int64_t>(w.size());
  const std::int64_t P = (k - 1) / 2;
  std::vector<double> y(static_cast<std::size_t>(N), 0.0);
  for (std::int64_t t = 0; t < N; ++t) {
    double acc = 0.0;
    for (std::int64_t j = 0; j < k; ++j) {
      const std::int64_t src = t + j - P;
      if (src >= 0 && src < N) acc += w[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(src)];
    }
    y[static_cast<std::size_t>(t)] = acc;
  }
  return y;
}

// Two-pass population mean / std-with-eps of a vector.
struct StatsOracle {
  double mean;
  double stddev;  // sqrt(population var + eps)
};
inline StatsOracle stats_oracle(const std::vector<double>& x, double eps = 1e-5) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - m) * (v - m);
  var /= static_cast<double>(x.size());
  return {m, std::sqrt(var + eps)};
}

// Scalar tanh-approximation GELU, written independently of the library op.
inline double gelu_oracle(double x) {
  const double u = std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

// ---------------------------------------------------------------------------
// Dataset plumbing shared by training / harness tests
// ---------------------------------------------------------------------------

template <class T = double>
struct PreparedData {
  canet::WindowBatch<T> train, val, test;
};

// Chronological split, train-fitted standardization, per-split windowing.
template <class T = double>
PreparedData<T> prepare_data(const canet::SeriesFrame& f, std::int64_t L, std::int64_t O) {
  auto s = canet::chrono_split(f);
  auto stats = canet::fit_standardizer(s.train);
  PreparedData<T> p;
  p.train = canet::make_windows<T>(canet::apply_standardizer(s.train, stats), L, O);
  p.val = canet::make_windows<T>(canet::apply_standardizer(s.val, stats), L, O);
  p.test = canet::make_windows<T>(canet::apply_standardizer(s.test, stats), L, O);
  return p;
}

}  // namespace testutil
