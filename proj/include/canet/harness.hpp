#pragma once

// ============================================================================
// Experiment harnesses.
//
// The library-level experiment drivers live here:
//
//   * paired_t_test      — one-sided paired Student t-test between two runs.
//   * run_ablation       — trains the five component ablations {full, w/o
//                          ASB, w/o ICB, w/o MRP, w/o BG} under identical
//                          seeds and tabulates validation/test metrics.
//   * run_norm_swap      — same protocol across norm_kind ∈ {nsan, layer,
//                          batch, instance}.
//   * run_noise_sweep    — evaluates a trained model on test inputs with
//                          additive Gaussian noise of increasing level.
//   * run_lookback_sweep — retrains at several look-back lengths with the
//                          horizon held fixed.
//
// Every harness is deterministic: variants run sequentially, all randomness
// flows from the seeds in ModelConfig/TrainConfig, and the noise sweep reuses
// one seed across levels so each level scales the *same* Gaussian draws.
// CSV writers plus a JSON run-manifest (config hash, seed, git-style content
// hash of the input files) make runs reproducible and attributable.
// ============================================================================

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "canet/dataset.hpp"
#include "canet/error.hpp"
#include "canet/hash.hpp"
#include "canet/model.hpp"
#include "canet/train.hpp"

namespace canet {

// ---------------------------------------------------------------------------
// Student-t CDF and the paired t-test
// ---------------------------------------------------------------------------

namespace detail {

// Continued-fraction evaluation of the regularized incomplete beta function,
// modified Lentz's method.  Convergence for the arguments used here (a = ν/2,
// b = 1/2, x < 1) is a handful of iterations.
inline double beta_cont_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw numeric_error("incomplete beta continued fraction did not converge");
}

// Regularized incomplete beta I_x(a, b).
inline double reg_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // Use the continued fraction directly below the symmetry point, otherwise
  // apply I_x(a,b) = 1 - I_{1-x}(b,a) where it converges faster.
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_cont_fraction(a, b, x) / a;
  }
  return 1.0 - front * beta_cont_fraction(b, a, 1.0 - x) / b;
}

}  // namespace detail

// P(T <= t) for Student's t with nu degrees of freedom, via the incomplete
// beta identity P(|T| > |t|) = I_x(nu/2, 1/2) with x = nu / (nu + t^2).
inline double student_t_cdf(double t, double nu) {
  if (nu < 1.0) throw contract_error("student_t_cdf requires nu >= 1");
  const double x = nu / (nu + t * t);
  const double two_sided_tail = detail::reg_incomplete_beta(0.5 * nu, 0.5, x);
  const double one_tail = 0.5 * two_sided_tail;
  return t > 0.0 ? 1.0 - one_tail : one_tail;
}

struct PairedTTest {
  double mean_diff = 0.0;    // mean(a - b)
  double t_stat = 0.0;       // mean_diff / (sd / sqrt(n))
  double p_one_sided = 0.5;  // P(T_{n-1} <= t): small when a < b consistently
  std::int64_t n = 0;
};

// Classic paired t-test on the differences a_i - b_i, one-sided towards
// "a is smaller".  Identical inputs are a well-defined no-evidence case
// (t = 0, p = 0.5); nonzero constant differences have zero variance and are
// rejected as degenerate.
inline PairedTTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw contract_error("paired_t_test: length mismatch (" + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()) + ")");
  }
  const std::int64_t n = static_cast<std::int64_t>(a.size());
  if (n < 2) throw contract_error("paired_t_test needs at least 2 paired samples");

  std::vector<double> d(a.size());
  bool all_equal = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d[i] = a[i] - b[i];
    if (d[i] != d[0]) all_equal = false;
  }
  PairedTTest r;
  r.n = n;
  if (all_equal && d[0] == 0.0) return r;  // a == b elementwise
  if (all_equal) {
    throw contract_error(
        "paired_t_test: degenerate input (constant nonzero differences have zero variance)");
  }

  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  r.mean_diff = mean;
  r.t_stat = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.p_one_sided = student_t_cdf(r.t_stat, static_cast<double>(n - 1));
  return r;
}

// ---------------------------------------------------------------------------
// Variant harness (ablations, normalization swap)
// ---------------------------------------------------------------------------

struct VariantSpec {
  std::string label;
  ModelConfig config;
};

// Table-5 protocol: each ablation flips exactly one switch off; the
// multi-resolution ablation collapses to the single fixed patch size 16
// (ModelConfig::effective_patch_sizes).
inline std::vector<VariantSpec> ablation_variants(const ModelConfig& base) {
  std::vector<VariantSpec> v;
  v.push_back({"full", base});
  v.push_back({"w/o ASB", base});
  v.back().config.use_asb = false;
  v.push_back({"w/o ICB", base});
  v.back().config.use_icb = false;
  v.push_back({"w/o MRP", base});
  v.back().config.use_mrp = false;
  v.push_back({"w/o BG", base});
  v.back().config.use_blending_gate = false;
  return v;
}

// Table-4 protocol: swap the in-model normalization while everything else is
// held fixed.
inline std::vector<VariantSpec> norm_swap_variants(const ModelConfig& base) {
  std::vector<VariantSpec> v;
  for (NormKind k : {NormKind::nsan, NormKind::layer, NormKind::batch, NormKind::instance}) {
    v.push_back({norm_kind_to_string(k), base});
    v.back().config.norm_kind = k;
  }
  return v;
}

// Standardize once on the training segment, then apply the frozen statistics
// to every split (metrics are reported in these standardized units).
inline SplitFrames prepare_splits(const SeriesFrame& raw) {
  SplitFrames s = chrono_split(raw);
  const ChannelStats stats = fit_standardizer(s.train);
  s.train = apply_standardizer(s.train, stats);
  s.val = apply_standardizer(s.val, stats);
  s.test = apply_standardizer(s.test, stats);
  return s;
}

template <class T>
struct TrainedVariant {
  std::string label;
  ModelConfig config;
  Model<T> model;
  TrainHistory history;
  EvalReport test;
};

// Trains one configuration on the standardized splits and evaluates it on the
// test segment.  All randomness comes from config.seed / tc.seed, so two
// variants trained with the same seeds see identical shuffles and noise.
template <class T = double>
TrainedVariant<T> train_variant(const std::string& label, const ModelConfig& config,
                                const TrainConfig& tc, const SplitFrames& splits) {
  TrainedVariant<T> out;
  out.label = label;
  out.config = config;
  auto train_w = make_windows<T>(splits.train, config.look_back, config.horizon);
  auto val_w = make_windows<T>(splits.val, config.look_back, config.horizon);
  auto test_w = make_windows<T>(splits.test, config.look_back, config.horizon);
  out.model = make_model<T>(config);
  out.history = train(out.model, train_w, val_w, tc);
  out.test = evaluate(out.model, test_w);
  return out;
}

// Sequentially trains every variant with the shared TrainConfig.  Sequential
// execution keeps the harness bit-reproducible; per-run parallelism lives in
// evaluate().
template <class T = double>
std::vector<TrainedVariant<T>> run_variants(const std::vector<VariantSpec>& specs,
                                            const TrainConfig& tc, const SplitFrames& splits) {
  std::vector<TrainedVariant<T>> rows;
  rows.reserve(specs.size());
  for (const auto& spec : specs) {
    rows.push_back(train_variant<T>(spec.label, spec.config, tc, splits));
  }
  return rows;
}

template <class T = double>
std::vector<TrainedVariant<T>> run_ablation(const ModelConfig& base, const TrainConfig& tc,
                                            const SplitFrames& splits) {
  return run_variants<T>(ablation_variants(base), tc, splits);
}

template <class T = double>
std::vector<TrainedVariant<T>> run_norm_swap(const ModelConfig& base, const TrainConfig& tc,
                                             const SplitFrames& splits) {
  return run_variants<T>(norm_swap_variants(base), tc, splits);
}

// ---------------------------------------------------------------------------
// Noise sweep
// ---------------------------------------------------------------------------

struct NoiseRow {
  double level = 0.0;
  double mse = 0.0;
  double mae = 0.0;
};

inline const std::vector<double>& default_noise_levels() {
  static const std::vector<double> levels = {0.1, 0.2, 0.3, 0.4, 0.5};
  return levels;
}

// Evaluates a trained model on x + level * g for each level.  One seed is
// shared across levels, so every row perturbs the inputs with the *same*
// standard-normal draws scaled by its level; level 0 is the exact clean
// evaluation.  Targets are never perturbed.
template <class T>
std::vector<NoiseRow> run_noise_sweep(Model<T>& model, const WindowBatch<T>& test,
                                      const std::vector<double>& levels = default_noise_levels(),
                                      std::uint64_t noise_seed = 0) {
  std::vector<NoiseRow> rows;
  rows.reserve(levels.size());
  for (double level : levels) {
    WindowBatch<T> noisy;
    noisy.inputs = add_noise(test.inputs, NoiseSpec{level, noise_seed});
    noisy.targets = test.targets;
    noisy.origins = test.origins;
    const EvalReport r = evaluate(model, noisy);
    rows.push_back({level, r.mse, r.mae});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Look-back sweep
// ---------------------------------------------------------------------------

struct LookbackRow {
  std::int64_t look_back = 0;
  std::int64_t horizon = 0;
  double val_mse = 0.0;
  double mse = 0.0;
  double mae = 0.0;
};

inline const std::vector<std::int64_t>& default_lookbacks() {
  static const std::vector<std::int64_t> ls = {24, 48, 96, 192, 336};
  return ls;
}

// Retrains the model per look-back length with the horizon held fixed.
// Lengths whose L+O does not fit into every split are skipped with a warning
// rather than failing the sweep.
template <class T = double>
std::vector<LookbackRow> run_lookback_sweep(
    ModelConfig base, const TrainConfig& tc, const SplitFrames& splits,
    const std::vector<std::int64_t>& lookbacks = default_lookbacks()) {
  std::vector<LookbackRow> rows;
  for (std::int64_t L : lookbacks) {
    const std::int64_t need = L + base.horizon;
    const std::int64_t shortest =
        std::min({splits.train.T, splits.val.T, splits.test.T});
    if (need > shortest) {
      std::cerr << "warning: look-back sweep skipping L=" << L << " (L+O=" << need
                << " exceeds the shortest segment of length " << shortest << ")\n";
      continue;
    }
    base.look_back = L;
    auto row = train_variant<T>("L=" + std::to_string(L), base, tc, splits);
    rows.push_back(
        {L, base.horizon, row.history.best_val_mse, row.test.mse, row.test.mae});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV + manifest output
// ---------------------------------------------------------------------------

namespace detail {

inline std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

// Shortest decimal rendering that parses back to the identical double.
inline std::string csv_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace detail

inline void write_csv(std::ostream& out, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out << ',';
    out << detail::csv_quote(header[i]);
  }
  out << '\n';
  for (const auto& row : rows) {
    if (row.size() != header.size()) {
      throw contract_error("CSV row width does not match header");
    }
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << detail::csv_quote(row[i]);
    }
    out << '\n';
  }
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open CSV output: " + path);
  write_csv(out, header, rows);
  if (!out) throw io_error("failed writing CSV output: " + path);
}

// A rendered table: header plus string cells, ready for write_csv.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Header: variant,param_count,val_mse,test_mse,test_mae
template <class T>
CsvTable variant_table(const std::vector<TrainedVariant<T>>& rows) {
  CsvTable t;
  t.header = {"variant", "param_count", "val_mse", "test_mse", "test_mae"};
  t.rows.reserve(rows.size());
  for (const auto& r : rows) {
    t.rows.push_back({r.label, std::to_string(r.test.param_count),
                      detail::csv_double(r.history.best_val_mse),
                      detail::csv_double(r.test.mse), detail::csv_double(r.test.mae)});
  }
  return t;
}

// Header: level,mse,mae
inline CsvTable noise_table(const std::vector<NoiseRow>& rows) {
  CsvTable t;
  t.header = {"level", "mse", "mae"};
  t.rows.reserve(rows.size());
  for (const auto& r : rows) {
    t.rows.push_back(
        {detail::csv_double(r.level), detail::csv_double(r.mse), detail::csv_double(r.mae)});
  }
  return t;
}

// Header: look_back,horizon,val_mse,test_mse,test_mae
inline CsvTable lookback_table(const std::vector<LookbackRow>& rows) {
  CsvTable t;
  t.header = {"look_back", "horizon", "val_mse", "test_mse", "test_mae"};
  t.rows.reserve(rows.size());
  for (const auto& r : rows) {
    t.rows.push_back({std::to_string(r.look_back), std::to_string(r.horizon),
                      detail::csv_double(r.val_mse), detail::csv_double(r.mse),
                      detail::csv_double(r.mae)});
  }
  return t;
}

template <class T>
void write_variant_csv(const std::string& path, const std::vector<TrainedVariant<T>>& rows) {
  const CsvTable t = variant_table(rows);
  write_csv(path, t.header, t.rows);
}

inline void write_noise_csv(const std::string& path, const std::vector<NoiseRow>& rows) {
  const CsvTable t = noise_table(rows);
  write_csv(path, t.header, t.rows);
}

inline void write_lookback_csv(const std::string& path, const std::vector<LookbackRow>& rows) {
  const CsvTable t = lookback_table(rows);
  write_csv(path, t.header, t.rows);
}

// Run manifest: enough to re-run the experiment and to verify it ran on the
// same bytes.  Input files are fingerprinted with the git blob scheme, so the
// hashes match `git hash-object <file>`.
inline nlohmann::json run_manifest(const ModelConfig& mc, const TrainConfig& tc,
                                   const std::vector<std::string>& input_paths) {
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& p : input_paths) {
    inputs.push_back({{"path", p}, {"sha1", git_blob_hash_file(p)}});
  }
  return nlohmann::json{{"config_hash", detail::hex64(config_hash(mc))},
                        {"seed", mc.seed},
                        {"model", mc},
                        {"train", tc},
                        {"inputs", inputs}};
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open JSON output: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw io_error("failed writing JSON output: " + path);
}

}  // namespace canet
