#pragma once

// ============================================================================
// Data ingestion and preparation.
//
//   * SeriesFrame  — immutable multivariate series, values [C, T] row-major,
//                    loaded from header-ed CSV (a non-numeric first column is
//                    kept as timestamps and excluded from the channels).
//   * chrono_split — 7:1:2 chronological split at floor(0.7 T), floor(0.8 T).
//   * standardize  — per-channel z-score with statistics fitted on the train
//                    split only; invertible for reporting in original units.
//   * make_windows — sliding (input [L], target [O]) pairs, stride 1 by
//                    default; windows are built per split and therefore never
//                    straddle a split boundary.
//   * add_noise    — x + level * g, g ~ N(0, 1) from a seeded stream;
//                    level 0 returns the input bit-identically.
//   * adf_statistic— Augmented Dickey-Fuller t-statistic (constant, no
//                    trend), Schwert-rule lag k = floor(12 (T/100)^{1/4}),
//                    solved by least squares via the normal equations.
// ============================================================================

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "canet/error.hpp"
#include "canet/random.hpp"
#include "canet/tensor.hpp"

namespace canet {

struct SeriesFrame {
  std::vector<std::string> channels;    // channel names (timestamp excluded)
  std::vector<std::string> timestamps;  // empty when the file has none
  std::vector<double> values;           // [C, T] row-major
  std::int64_t C = 0;
  std::int64_t T = 0;
  // per-channel statistics of the train split; populated by standardize()
  std::vector<double> train_mean, train_std;

  double at(std::int64_t c, std::int64_t t) const {
    return values[static_cast<std::size_t>(c * T + t)];
  }
  std::vector<double> channel(std::int64_t c) const {
    return std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(c * T),
                               values.begin() + static_cast<std::ptrdiff_t>((c + 1) * T));
  }
};

namespace detail {

inline std::string trim(std::string s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  cells.push_back(trim(cur));
  return cells;
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace detail

inline SeriesFrame load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw io_error(path + ": empty file");
  const auto header = detail::split_csv_line(line);
  if (header.empty()) throw io_error(path + ": empty header");

  std::vector<std::vector<std::string>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;  // allow a trailing blank line
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw io_error(path + ": row " + std::to_string(lineno) + " has " +
                     std::to_string(cells.size()) + " cells, header has " +
                     std::to_string(header.size()));
    }
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw io_error(path + ": no data rows");

  // A first column whose first data cell is not a number is a timestamp.
  double probe;
  const bool has_timestamp = !detail::parse_double(rows[0][0], probe);
  const std::size_t first_channel = has_timestamp ? 1 : 0;
  if (header.size() == first_channel) {
    throw io_error(path + ": no numeric channels");
  }

  SeriesFrame f;
  f.T = static_cast<std::int64_t>(rows.size());
  f.C = static_cast<std::int64_t>(header.size() - first_channel);
  f.channels.assign(header.begin() + static_cast<std::ptrdiff_t>(first_channel), header.end());
  f.values.resize(static_cast<std::size_t>(f.C * f.T));
  if (has_timestamp) f.timestamps.reserve(rows.size());

  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (has_timestamp) f.timestamps.push_back(rows[r][0]);
    for (std::size_t c = first_channel; c < header.size(); ++c) {
      double v;
      if (!detail::parse_double(rows[r][c], v)) {
        throw io_error(path + ": row " + std::to_string(r + 2) + ", column '" + header[c] +
                       "': cannot parse '" + rows[r][c] + "' as a number");
      }
      const auto ch = static_cast<std::int64_t>(c - first_channel);
      f.values[static_cast<std::size_t>(ch * f.T + static_cast<std::int64_t>(r))] = v;
    }
  }
  return f;
}

namespace detail {

inline SeriesFrame slice_frame(const SeriesFrame& f, std::int64_t begin, std::int64_t end) {
  SeriesFrame out;
  out.channels = f.channels;
  out.C = f.C;
  out.T = end - begin;
  out.values.resize(static_cast<std::size_t>(out.C * out.T));
  for (std::int64_t c = 0; c < f.C; ++c) {
    for (std::int64_t t = begin; t < end; ++t) {
      out.values[static_cast<std::size_t>(c * out.T + (t - begin))] = f.at(c, t);
    }
  }
  if (!f.timestamps.empty()) {
    out.timestamps.assign(f.timestamps.begin() + static_cast<std::ptrdiff_t>(begin),
                          f.timestamps.begin() + static_cast<std::ptrdiff_t>(end));
  }
  out.train_mean = f.train_mean;
  out.train_std = f.train_std;
  return out;
}

}  // namespace detail

struct SplitFrames {
  SeriesFrame train, val, test;
};

// Chronological 7:1:2 split with floor boundaries.
inline SplitFrames chrono_split(const SeriesFrame& f) {
  if (f.T < 10) {
    throw config_error("chrono_split needs T >= 10, got " + std::to_string(f.T));
  }
  const std::int64_t b1 = (7 * f.T) / 10;
  const std::int64_t b2 = (8 * f.T) / 10;
  return {detail::slice_frame(f, 0, b1), detail::slice_frame(f, b1, b2),
          detail::slice_frame(f, b2, f.T)};
}

struct ChannelStats {
  std::vector<double> mean, stddev;  // stddev is floored at 1e-8
};

inline ChannelStats fit_standardizer(const SeriesFrame& train) {
  ChannelStats s;
  s.mean.resize(static_cast<std::size_t>(train.C));
  s.stddev.resize(static_cast<std::size_t>(train.C));
  for (std::int64_t c = 0; c < train.C; ++c) {
    double m = 0;
    for (std::int64_t t = 0; t < train.T; ++t) m += train.at(c, t);
    m /= static_cast<double>(train.T);
    double var = 0;
    for (std::int64_t t = 0; t < train.T; ++t) {
      const double d = train.at(c, t) - m;
      var += d * d;
    }
    var /= static_cast<double>(train.T);
    s.mean[static_cast<std::size_t>(c)] = m;
    s.stddev[static_cast<std::size_t>(c)] = std::max(std::sqrt(var), 1e-8);
  }
  return s;
}

inline SeriesFrame apply_standardizer(const SeriesFrame& f, const ChannelStats& s) {
  if (static_cast<std::int64_t>(s.mean.size()) != f.C) {
    throw shape_error("standardizer has " + std::to_string(s.mean.size()) +
                      " channels, frame has " + std::to_string(f.C));
  }
  SeriesFrame out = f;
  for (std::int64_t c = 0; c < f.C; ++c) {
    for (std::int64_t t = 0; t < f.T; ++t) {
      out.values[static_cast<std::size_t>(c * f.T + t)] =
          (f.at(c, t) - s.mean[static_cast<std::size_t>(c)]) / s.stddev[static_cast<std::size_t>(c)];
    }
  }
  out.train_mean = s.mean;
  out.train_std = s.stddev;
  return out;
}

inline SeriesFrame invert_standardizer(const SeriesFrame& f, const ChannelStats& s) {
  SeriesFrame out = f;
  for (std::int64_t c = 0; c < f.C; ++c) {
    for (std::int64_t t = 0; t < f.T; ++t) {
      out.values[static_cast<std::size_t>(c * f.T + t)] =
          f.at(c, t) * s.stddev[static_cast<std::size_t>(c)] + s.mean[static_cast<std::size_t>(c)];
    }
  }
  out.train_mean.clear();
  out.train_std.clear();
  return out;
}

// --------------------------------------------------------------------------
// Windowing
// --------------------------------------------------------------------------

template <class T>
struct WindowBatch {
  Tensor<T> inputs;                   // [B, C, L]
  Tensor<T> targets;                  // [B, C, O]
  std::vector<std::int64_t> origins;  // start index of each input window

  std::int64_t count() const { return static_cast<std::int64_t>(origins.size()); }
};

// Sliding windows over one split.  The target of the window starting at t is
// exactly rows t+L .. t+L+O-1.  A segment shorter than L+O yields an empty
// batch (with a warning on stderr) rather than an error.
template <class T>
WindowBatch<T> make_windows(const SeriesFrame& f, std::int64_t L, std::int64_t O,
                            std::int64_t stride = 1) {
  if (L < 1 || O < 1) throw config_error("window lengths must be >= 1");
  if (stride < 1) throw config_error("window stride must be >= 1");

  WindowBatch<T> batch;
  const std::int64_t last_origin = f.T - L - O;  // inclusive
  if (last_origin < 0) {
    std::cerr << "warning: segment of length " << f.T << " is shorter than L+O = " << (L + O)
              << "; no windows produced\n";
    batch.inputs = Tensor<T>(Shape{0, f.C, L}, {});
    batch.targets = Tensor<T>(Shape{0, f.C, O}, {});
    return batch;
  }
  for (std::int64_t t = 0; t <= last_origin; t += stride) batch.origins.push_back(t);

  const std::int64_t B = static_cast<std::int64_t>(batch.origins.size());
  std::vector<T> xv(static_cast<std::size_t>(B * f.C * L));
  std::vector<T> yv(static_cast<std::size_t>(B * f.C * O));
  for (std::int64_t b = 0; b < B; ++b) {
    const std::int64_t t0 = batch.origins[static_cast<std::size_t>(b)];
    for (std::int64_t c = 0; c < f.C; ++c) {
      for (std::int64_t i = 0; i < L; ++i) {
        xv[static_cast<std::size_t>((b * f.C + c) * L + i)] = static_cast<T>(f.at(c, t0 + i));
      }
      for (std::int64_t i = 0; i < O; ++i) {
        yv[static_cast<std::size_t>((b * f.C + c) * O + i)] =
            static_cast<T>(f.at(c, t0 + L + i));
      }
    }
  }
  batch.inputs = Tensor<T>(Shape{B, f.C, L}, std::move(xv));
  batch.targets = Tensor<T>(Shape{B, f.C, O}, std::move(yv));
  return batch;
}

// Rows `indices` of a batch gathered into a contiguous sub-batch.
template <class T>
WindowBatch<T> gather_windows(const WindowBatch<T>& batch,
                              const std::vector<std::int64_t>& indices) {
  const std::int64_t C = batch.inputs.dim(1), L = batch.inputs.dim(2),
                     O = batch.targets.dim(2);
  const std::int64_t B = static_cast<std::int64_t>(indices.size());
  std::vector<T> xv(static_cast<std::size_t>(B * C * L));
  std::vector<T> yv(static_cast<std::size_t>(B * C * O));
  WindowBatch<T> out;
  for (std::int64_t b = 0; b < B; ++b) {
    const std::int64_t src = indices[static_cast<std::size_t>(b)];
    if (src < 0 || src >= batch.count()) {
      throw contract_error("gather_windows index out of range");
    }
    std::copy_n(batch.inputs.values().begin() + static_cast<std::ptrdiff_t>(src * C * L), C * L,
                xv.begin() + static_cast<std::ptrdiff_t>(b * C * L));
    std::copy_n(batch.targets.values().begin() + static_cast<std::ptrdiff_t>(src * C * O), C * O,
                yv.begin() + static_cast<std::ptrdiff_t>(b * C * O));
    out.origins.push_back(batch.origins[static_cast<std::size_t>(src)]);
  }
  out.inputs = Tensor<T>(Shape{B, C, L}, std::move(xv));
  out.targets = Tensor<T>(Shape{B, C, O}, std::move(yv));
  return out;
}

// --------------------------------------------------------------------------
// Noise injection
// --------------------------------------------------------------------------

struct NoiseSpec {
  double level = 0.0;  // noise scale; distinct from the gate's blend ratio
  std::uint64_t seed = 0;

  void validate() const {
    if (level < 0.0) throw config_error("noise level must be >= 0");
  }
};

// x + level * g with g ~ N(0, 1) i.i.d.; level 0 is the exact identity.
template <class T>
Tensor<T> add_noise(const Tensor<T>& x, const NoiseSpec& spec) {
  spec.validate();
  if (spec.level == 0.0) return x;
  auto eng = make_stream(spec.seed, "noise");
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<T> out = x.values();
  for (auto& v : out) v += static_cast<T>(spec.level * dist(eng));
  return Tensor<T>(x.shape(), std::move(out));
}

// --------------------------------------------------------------------------
// Stationarity diagnostic
// --------------------------------------------------------------------------

namespace detail {

// Solves A x = b for symmetric positive-definite A by Gauss-Jordan with
// partial pivoting, also returning inv(A); throws on singularity.
inline void solve_normal_equations(std::vector<double> a, std::int64_t n,
                                   std::vector<double>& x, std::vector<double>& inv) {
  inv.assign(static_cast<std::size_t>(n * n), 0.0);
  for (std::int64_t i = 0; i < n; ++i) inv[static_cast<std::size_t>(i * n + i)] = 1.0;

  for (std::int64_t col = 0; col < n; ++col) {
    std::int64_t pivot = col;
    for (std::int64_t r = col + 1; r < n; ++r) {
      if (std::abs(a[static_cast<std::size_t>(r * n + col)]) >
          std::abs(a[static_cast<std::size_t>(pivot * n + col)])) {
        pivot = r;
      }
    }
    const double pv = a[static_cast<std::size_t>(pivot * n + col)];
    if (!(std::abs(pv) > 1e-12)) {
      throw numeric_error("ADF design matrix is singular");
    }
    if (pivot != col) {
      for (std::int64_t c = 0; c < n; ++c) {
        std::swap(a[static_cast<std::size_t>(pivot * n + c)],
                  a[static_cast<std::size_t>(col * n + c)]);
        std::swap(inv[static_cast<std::size_t>(pivot * n + c)],
                  inv[static_cast<std::size_t>(col * n + c)]);
      }
      std::swap(x[static_cast<std::size_t>(pivot)], x[static_cast<std::size_t>(col)]);
    }
    const double scale = 1.0 / a[static_cast<std::size_t>(col * n + col)];
    for (std::int64_t c = 0; c < n; ++c) {
      a[static_cast<std::size_t>(col * n + c)] *= scale;
      inv[static_cast<std::size_t>(col * n + c)] *= scale;
    }
    x[static_cast<std::size_t>(col)] *= scale;
    for (std::int64_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double factor = a[static_cast<std::size_t>(r * n + col)];
      if (factor == 0.0) continue;
      for (std::int64_t c = 0; c < n; ++c) {
        a[static_cast<std::size_t>(r * n + c)] -=
            factor * a[static_cast<std::size_t>(col * n + c)];
        inv[static_cast<std::size_t>(r * n + c)] -=
            factor * inv[static_cast<std::size_t>(col * n + c)];
      }
      x[static_cast<std::size_t>(r)] -= factor * x[static_cast<std::size_t>(col)];
    }
  }
}

}  // namespace detail

namespace detail {

struct AdfFit {
  double t_stat = 0.0;
  double rss = 0.0;
  std::int64_t nobs = 0;
  std::int64_t nparams = 0;
};

// Fits  Δy_t = α + ρ·y_{t−1} + Σ_{i=1..k} φ_i·Δy_{t−i} + e_t  over
// t = t_start .. T−1 via the normal equations; returns the t-statistic of ρ.
inline AdfFit adf_fit(const std::vector<double>& y, std::int64_t k, std::int64_t t_start) {
  const auto T = static_cast<std::int64_t>(y.size());
  AdfFit fit;
  fit.nobs = T - t_start;
  fit.nparams = k + 2;
  if (t_start < k + 1 || fit.nobs <= fit.nparams) {
    throw config_error("adf_statistic: series too short for lag order " + std::to_string(k));
  }

  auto dy = [&](std::int64_t t) {
    return y[static_cast<std::size_t>(t)] - y[static_cast<std::size_t>(t - 1)];
  };
  auto row = [&](std::int64_t t, std::int64_t j) -> double {
    if (j == 0) return 1.0;
    if (j == 1) return y[static_cast<std::size_t>(t - 1)];
    return dy(t - (j - 1));
  };

  const std::int64_t p = fit.nparams;
  std::vector<double> xtx(static_cast<std::size_t>(p * p), 0.0);
  std::vector<double> xtz(static_cast<std::size_t>(p), 0.0);
  for (std::int64_t t = t_start; t < T; ++t) {
    const double z = dy(t);
    for (std::int64_t i = 0; i < p; ++i) {
      const double xi = row(t, i);
      xtz[static_cast<std::size_t>(i)] += xi * z;
      for (std::int64_t j = i; j < p; ++j) {
        xtx[static_cast<std::size_t>(i * p + j)] += xi * row(t, j);
      }
    }
  }
  for (std::int64_t i = 0; i < p; ++i) {
    for (std::int64_t j = 0; j < i; ++j) {
      xtx[static_cast<std::size_t>(i * p + j)] = xtx[static_cast<std::size_t>(j * p + i)];
    }
  }

  std::vector<double> beta = xtz, inv;
  solve_normal_equations(xtx, p, beta, inv);

  for (std::int64_t t = t_start; t < T; ++t) {
    double pred = 0.0;
    for (std::int64_t j = 0; j < p; ++j) pred += beta[static_cast<std::size_t>(j)] * row(t, j);
    const double r = dy(t) - pred;
    fit.rss += r * r;
  }
  const double sigma2 = fit.rss / static_cast<double>(fit.nobs - p);
  const double se = std::sqrt(sigma2 * inv[static_cast<std::size_t>(1 * p + 1)]);
  if (!(se > 0.0) || !std::isfinite(se)) {
    throw numeric_error("ADF standard error is not finite");
  }
  fit.t_stat = beta[1] / se;
  return fit;
}

}  // namespace detail

// Schwert-rule maximum lag order.
inline std::int64_t adf_max_lag(std::int64_t T) {
  return static_cast<std::int64_t>(
      std::floor(12.0 * std::pow(static_cast<double>(T) / 100.0, 0.25)));
}

// ADF regression  Δy_t = α + ρ·y_{t−1} + Σ_{i=1..k} φ_i·Δy_{t−i} + e_t  with
// constant, no trend; returns the t-statistic of ρ (more negative = more
// stationary).  With lag < 0 the lag order is chosen by AIC over
// 0..adf_max_lag(T) — the Schwert rule bounds the search, which is the
// standard usage (a fixed Schwert-length lag would swamp short-memory series
// with irrelevant regressors).  Selection compares all candidates on the same
// trimmed sample; the winner is refit on its full usable sample.  Passing
// lag >= 0 forces that exact lag order.
inline double adf_statistic(const std::vector<double>& y, std::int64_t lag = -1) {
  const auto T = static_cast<std::int64_t>(y.size());
  if (T < 20) throw config_error("adf_statistic needs T >= 20, got " + std::to_string(T));
  if (lag >= 0) return detail::adf_fit(y, lag, lag + 1).t_stat;

  const std::int64_t k_max = adf_max_lag(T);
  const std::int64_t t_start = k_max + 1;  // common sample for AIC comparison
  std::int64_t best_lag = -1;
  double best_aic = 0.0;
  for (std::int64_t k = 0; k <= k_max; ++k) {
    if (T - t_start <= k + 2) break;  // out of degrees of freedom
    const auto fit = detail::adf_fit(y, k, t_start);
    const auto n = static_cast<double>(fit.nobs);
    const double aic = n * std::log(fit.rss / n) + 2.0 * static_cast<double>(fit.nparams);
    if (best_lag < 0 || aic < best_aic) {
      best_aic = aic;
      best_lag = k;
    }
  }
  if (best_lag < 0) throw config_error("adf_statistic: series too short for any lag order");
  return detail::adf_fit(y, best_lag, best_lag + 1).t_stat;
}

}  // namespace canet
