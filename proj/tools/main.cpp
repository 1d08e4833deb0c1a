// ============================================================================
// canet — command-line front end.
//
//   summarize       per-dataset channels, length and ADF statistic
//   train           fit a model, write checkpoint + history CSV + manifest
//   eval            evaluate a checkpoint on one split of a dataset
//   ablate          train the five component ablations under shared seeds
//   noise-sweep     evaluate a checkpoint under additive input noise
//   lookback-sweep  retrain across look-back lengths at fixed horizon
//   gradcheck       run the finite-difference suite over every block
//
// Configuration comes from one JSON file (--config) with two optional
// sections, {"model": {...}, "train": {...}}; unknown keys anywhere are
// rejected.  Flags override the file: --seed replaces both the model and
// train seeds (one root seed, split per consumer stream), --precision picks
// 32- or 64-bit floats.  Every command prints a reproducibility banner (the
// fully resolved config and seed) to stderr before doing any work, keeping
// stdout clean CSV.
//
// Exit codes: 0 success; 1 configuration/validation error (including flag
// parsing); 2 runtime error (I/O, numeric failure, failed gradient check).
// ============================================================================

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "canet/checkpoint.hpp"
#include "canet/dataset.hpp"
#include "canet/error.hpp"
#include "canet/gradcheck_cases.hpp"
#include "canet/harness.hpp"
#include "canet/model.hpp"
#include "canet/train.hpp"

namespace {

struct CliOptions {
  std::string config_path;
  std::vector<std::string> data;
  std::string out;
  std::string ckpt;
  std::string split = "test";
  std::optional<std::uint64_t> seed;
  std::optional<int> precision;
};

struct Resolved {
  canet::ModelConfig model;
  canet::TrainConfig train;
};

// Config file -> defaults -> flag overrides, then validation.
Resolved resolve_configs(const CliOptions& opts) {
  Resolved r;
  if (!opts.config_path.empty()) {
    std::ifstream in(opts.config_path);
    if (!in) throw canet::io_error("cannot open config file: " + opts.config_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw canet::config_error("invalid JSON in " + opts.config_path + ": " + e.what());
    }
    if (!j.is_object()) throw canet::config_error("config root must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      (void)value;
      if (key != "model" && key != "train") {
        throw canet::config_error("unknown config section '" + key + "'");
      }
    }
    if (j.contains("model")) r.model = canet::parse_model_config(j.at("model"));
    if (j.contains("train")) r.train = canet::parse_train_config(j.at("train"));
  }
  if (opts.seed) {
    r.model.seed = *opts.seed;
    r.train.seed = *opts.seed;
  }
  if (opts.precision) r.train.precision = *opts.precision;
  r.model.validate();
  r.train.validate();
  return r;
}

void banner(const std::string& cmd, const Resolved& r) {
  const nlohmann::json j{{"model", r.model}, {"train", r.train}};
  std::cerr << "canet " << cmd << " | seed " << r.model.seed << " | precision "
            << r.train.precision << "\n"
            << "resolved config: " << j.dump() << "\n";
}

std::string single_data_path(const CliOptions& opts) {
  if (opts.data.size() != 1) {
    throw canet::config_error("this command expects exactly one --data path, got " +
                              std::to_string(opts.data.size()));
  }
  return opts.data.front();
}

void emit_table(const std::string& out_path, const canet::CsvTable& t) {
  if (out_path.empty()) {
    canet::write_csv(std::cout, t.header, t.rows);
  } else {
    canet::write_csv(out_path, t.header, t.rows);
  }
}

void maybe_write_manifest(const std::string& out_path, const Resolved& r,
                          const std::vector<std::string>& inputs) {
  if (out_path.empty()) return;
  canet::write_json(out_path + ".manifest.json", canet::run_manifest(r.model, r.train, inputs));
}

const canet::SeriesFrame& pick_split(const canet::SplitFrames& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  throw canet::config_error("--split must be train, val or test, got '" + name + "'");
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_summarize(const CliOptions& opts) {
  if (opts.data.empty()) throw canet::config_error("summarize needs at least one --data path");
  canet::CsvTable t;
  t.header = {"dataset", "channels", "rows", "adf"};
  for (const auto& path : opts.data) {
    const auto frame = canet::load_csv(path);
    // the ADF statistic is computed on the last channel (the conventional
    // target column in the benchmark CSV layout)
    const double adf = canet::adf_statistic(frame.channel(frame.C - 1));
    t.rows.push_back({std::filesystem::path(path).filename().string(),
                      std::to_string(frame.C), std::to_string(frame.T),
                      canet::detail::csv_double(adf)});
  }
  emit_table(opts.out, t);
  return 0;
}

template <class T>
int cmd_train(const CliOptions& opts, const Resolved& r) {
  if (opts.out.empty()) throw canet::config_error("train needs --out for the checkpoint");
  const std::string data_path = single_data_path(opts);
  const auto splits = canet::prepare_splits(canet::load_csv(data_path));
  auto run = canet::train_variant<T>("train", r.model, r.train, splits);

  canet::save_checkpoint(opts.out, run.model);
  canet::CsvTable hist;
  hist.header = {"epoch", "train_loss", "val_mse"};
  for (std::size_t e = 0; e < run.history.epoch_train_loss.size(); ++e) {
    hist.rows.push_back({std::to_string(e),
                         canet::detail::csv_double(run.history.epoch_train_loss[e]),
                         canet::detail::csv_double(run.history.epoch_val_mse[e])});
  }
  canet::write_csv(opts.out + ".history.csv", hist.header, hist.rows);
  maybe_write_manifest(opts.out, r, {data_path});

  std::cerr << "trained " << run.history.epoch_train_loss.size() << " epochs (best epoch "
            << run.history.best_epoch << ", val mse "
            << canet::detail::csv_double(run.history.best_val_mse) << ")\n"
            << "test mse " << canet::detail::csv_double(run.test.mse) << " mae "
            << canet::detail::csv_double(run.test.mae) << "\n"
            << "checkpoint written to " << opts.out << "\n";
  return 0;
}

template <class T>
int cmd_eval(const CliOptions& opts) {
  if (opts.ckpt.empty()) throw canet::config_error("eval needs --ckpt");
  auto model = canet::load_checkpoint<T>(opts.ckpt);
  const std::string data_path = single_data_path(opts);
  const auto splits = canet::prepare_splits(canet::load_csv(data_path));
  const auto& segment = pick_split(splits, opts.split);
  auto windows =
      canet::make_windows<T>(segment, model.config.look_back, model.config.horizon);
  const auto rep = canet::evaluate(model, windows);

  canet::CsvTable t;
  t.header = {"horizon", "mse", "mae"};
  for (std::size_t h = 0; h < rep.per_horizon_mse.size(); ++h) {
    t.rows.push_back({std::to_string(h + 1), canet::detail::csv_double(rep.per_horizon_mse[h]),
                      canet::detail::csv_double(rep.per_horizon_mae[h])});
  }
  t.rows.push_back(
      {"all", canet::detail::csv_double(rep.mse), canet::detail::csv_double(rep.mae)});
  emit_table(opts.out, t);
  std::cerr << "evaluated " << rep.windows << " windows on split '" << opts.split << "' ("
            << rep.param_count << " params)\n";
  return 0;
}

template <class T>
int cmd_ablate(const CliOptions& opts, const Resolved& r) {
  const std::string data_path = single_data_path(opts);
  const auto splits = canet::prepare_splits(canet::load_csv(data_path));
  const auto rows = canet::run_ablation<T>(r.model, r.train, splits);
  emit_table(opts.out, canet::variant_table(rows));
  maybe_write_manifest(opts.out, r, {data_path});
  return 0;
}

template <class T>
int cmd_noise_sweep(const CliOptions& opts, const Resolved& r) {
  if (opts.ckpt.empty()) throw canet::config_error("noise-sweep needs --ckpt");
  auto model = canet::load_checkpoint<T>(opts.ckpt);
  const std::string data_path = single_data_path(opts);
  const auto splits = canet::prepare_splits(canet::load_csv(data_path));
  auto windows = canet::make_windows<T>(splits.test, model.config.look_back,
                                        model.config.horizon);
  const std::uint64_t noise_seed = opts.seed ? *opts.seed : model.config.seed;
  const auto rows =
      canet::run_noise_sweep(model, windows, canet::default_noise_levels(), noise_seed);
  emit_table(opts.out, canet::noise_table(rows));
  maybe_write_manifest(opts.out, r, {data_path});
  return 0;
}

template <class T>
int cmd_lookback_sweep(const CliOptions& opts, const Resolved& r) {
  const std::string data_path = single_data_path(opts);
  const auto splits = canet::prepare_splits(canet::load_csv(data_path));
  const auto rows = canet::run_lookback_sweep<T>(r.model, r.train, splits);
  emit_table(opts.out, canet::lookback_table(rows));
  maybe_write_manifest(opts.out, r, {data_path});
  return 0;
}

int cmd_gradcheck() {
  bool all_pass = true;
  for (const auto& rep : canet::run_standard_gradchecks()) {
    std::cout << "gradcheck " << rep.name << ": " << (rep.pass ? "PASS" : "FAIL")
              << " (max err " << rep.max_err << " over " << rep.checked
              << " derivatives, tol " << rep.tolerance << ")\n";
    all_pass = all_pass && rep.pass;
  }
  if (!all_pass) {
    std::cerr << "gradient check failed\n";
    return 2;
  }
  return 0;
}

// Runs `fn<float>` or `fn<double>` per the resolved precision.
template <template <class> class Fn>
int dispatch(const Resolved& r, const CliOptions& opts) {
  if (r.train.precision == 32) return Fn<float>::run(opts, r);
  return Fn<double>::run(opts, r);
}

template <class T>
struct TrainCmd {
  static int run(const CliOptions& o, const Resolved& r) { return cmd_train<T>(o, r); }
};
template <class T>
struct EvalCmd {
  static int run(const CliOptions& o, const Resolved&) { return cmd_eval<T>(o); }
};
template <class T>
struct AblateCmd {
  static int run(const CliOptions& o, const Resolved& r) { return cmd_ablate<T>(o, r); }
};
template <class T>
struct NoiseCmd {
  static int run(const CliOptions& o, const Resolved& r) { return cmd_noise_sweep<T>(o, r); }
};
template <class T>
struct LookbackCmd {
  static int run(const CliOptions& o, const Resolved& r) { return cmd_lookback_sweep<T>(o, r); }
};

void add_common_options(CLI::App* sub, CliOptions& opts, bool with_ckpt = false,
                        bool with_split = false) {
  sub->add_option("--config", opts.config_path, "JSON config file with model/train sections");
  sub->add_option("--data", opts.data, "input CSV path(s)");
  sub->add_option("--out", opts.out, "output path (CSV or checkpoint; stdout if omitted)");
  sub->add_option("--seed", opts.seed, "root seed overriding the config file");
  sub->add_option("--precision", opts.precision, "float width")
      ->check(CLI::IsMember({32, 64}));
  if (with_ckpt) sub->add_option("--ckpt", opts.ckpt, "checkpoint path to evaluate");
  if (with_split) {
    sub->add_option("--split", opts.split, "dataset segment: train, val or test")
        ->check(CLI::IsMember({"train", "val", "test"}));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"canet — long-horizon multivariate time-series forecasting"};
  app.require_subcommand(1);
  CliOptions opts;

  auto* summarize = app.add_subcommand("summarize", "dataset shapes and ADF statistics");
  add_common_options(summarize, opts);
  auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
  add_common_options(train, opts);
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common_options(eval, opts, /*with_ckpt=*/true, /*with_split=*/true);
  auto* ablate = app.add_subcommand("ablate", "train the five component ablations");
  add_common_options(ablate, opts);
  auto* noise = app.add_subcommand("noise-sweep", "evaluate under additive input noise");
  add_common_options(noise, opts, /*with_ckpt=*/true);
  auto* lookback = app.add_subcommand("lookback-sweep", "retrain across look-back lengths");
  add_common_options(lookback, opts);
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  add_common_options(gradcheck, opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // help/version are success; any parse error is 1
  }

  try {
    const Resolved r = resolve_configs(opts);
    const std::string cmd = app.get_subcommands().front()->get_name();
    banner(cmd, r);
    if (summarize->parsed()) return cmd_summarize(opts);
    if (train->parsed()) return dispatch<TrainCmd>(r, opts);
    if (eval->parsed()) return dispatch<EvalCmd>(r, opts);
    if (ablate->parsed()) return dispatch<AblateCmd>(r, opts);
    if (noise->parsed()) return dispatch<NoiseCmd>(r, opts);
    if (lookback->parsed()) return dispatch<LookbackCmd>(r, opts);
    if (gradcheck->parsed()) return cmd_gradcheck();
    throw canet::contract_error("no subcommand dispatched");
  } catch (const canet::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const canet::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
