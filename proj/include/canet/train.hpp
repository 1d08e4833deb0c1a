#pragma once

// ============================================================================
// Loss, metrics, optimizer, training loop, evaluation, naive baselines.
//
//   * l2_loss — differentiable sum of squared errors divided by batch size
//     (the division keeps the learning rate independent of batch size; the
//     gradient direction is identical to the pure sum).
//   * mse/mae — plain element-mean metrics, computed outside the tape.
//   * Adam    — standard bias-corrected Adam keyed by parameter name, moments
//     held in double regardless of model precision.
//   * train   — seeded-shuffle epoch loop with early stopping on validation
//     MSE and best-epoch restoration.  All randomness comes from two streams
//     split off the train seed ("shuffle", "dropout"), so a rerun with the
//     same config is bit-identical in 64-bit mode.
//   * evaluate — deterministic multi-threaded evaluation: batches are fixed
//     chunks, workers pick them round-robin, partial sums merge in batch
//     order, so the result is independent of the worker count.  CANET_THREADS
//     caps the workers.
//   * last_value_baseline / seasonal_baseline — naive sanity floors.
// ============================================================================

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "canet/dataset.hpp"
#include "canet/model.hpp"

namespace canet {

// --------------------------------------------------------------------------
// Loss and metrics
// --------------------------------------------------------------------------

template <class T>
Tensor<T> l2_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw shape_error("l2_loss shapes differ: " + format_shape(pred.shape()) + " vs " +
                      format_shape(target.shape()));
  }
  auto diff = sub(pred, target);
  return mul_scalar(sum_all(mul(diff, diff)), T(1) / static_cast<T>(pred.dim(0)));
}

template <class T>
double mse(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw shape_error("mse shapes differ: " + format_shape(pred.shape()) + " vs " +
                      format_shape(target.shape()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.values().size(); ++i) {
    const double d = static_cast<double>(pred.values()[i]) - static_cast<double>(target.values()[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(pred.values().size());
}

template <class T>
double mae(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw shape_error("mae shapes differ: " + format_shape(pred.shape()) + " vs " +
                      format_shape(target.shape()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.values().size(); ++i) {
    acc += std::abs(static_cast<double>(pred.values()[i]) -
                    static_cast<double>(target.values()[i]));
  }
  return acc / static_cast<double>(pred.values().size());
}

// --------------------------------------------------------------------------
// Optimizer
// --------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moments are stored per parameter name, so replacing parameter tensors (the
// update itself builds fresh tensors) keeps state attached correctly.
template <class T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {
    if (cfg_.lr < 0.0) throw config_error("learning rate must be >= 0");
  }

  void step(Model<T>& model) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    visit_params(model, [&](const std::string& name, Tensor<T>& param, bool trainable) {
      if (!trainable || !param.has_grad()) return;
      const auto& g = param.grad();
      auto& [m, v] = moments_[name];
      if (m.empty()) {
        m.assign(g.size(), 0.0);
        v.assign(g.size(), 0.0);
      }
      std::vector<T> next = param.values();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        const double update = cfg_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
        next[i] = static_cast<T>(static_cast<double>(next[i]) - update);
      }
      param = Tensor<T>(param.shape(), std::move(next), /*requires_grad=*/true);
    });
  }

  std::int64_t steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

// --------------------------------------------------------------------------
// Train configuration
// --------------------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 1e-3;
  std::int64_t batch_size = 32;
  std::int64_t max_epochs = 20;
  std::int64_t patience = 5;
  std::uint64_t seed = 42;
  std::int64_t precision = 64;  // 32 or 64; the caller dispatches on it

  void validate() const {
    if (!(learning_rate > 0.0)) throw config_error("learning_rate must be > 0");
    if (batch_size < 1) throw config_error("batch_size must be >= 1");
    if (max_epochs < 1) throw config_error("max_epochs must be >= 1");
    if (patience < 1) throw config_error("patience must be >= 1");
    if (precision != 32 && precision != 64) {
      throw config_error("precision must be 32 or 64, got " + std::to_string(precision));
    }
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
                     {"max_epochs", c.max_epochs},       {"patience", c.patience},
                     {"seed", c.seed},                   {"precision", c.precision}};
}

inline TrainConfig parse_train_config(const nlohmann::json& j) {
  detail::reject_unknown_keys(
      j, {"learning_rate", "batch_size", "max_epochs", "patience", "seed", "precision"},
      "train config");
  TrainConfig c;
  detail::maybe_get(j, "learning_rate", c.learning_rate);
  detail::maybe_get(j, "batch_size", c.batch_size);
  detail::maybe_get(j, "max_epochs", c.max_epochs);
  detail::maybe_get(j, "patience", c.patience);
  detail::maybe_get(j, "seed", c.seed);
  detail::maybe_get(j, "precision", c.precision);
  c.validate();
  return c;
}

// --------------------------------------------------------------------------
// Evaluation
// --------------------------------------------------------------------------

struct EvalReport {
  double mse = 0.0;
  double mae = 0.0;
  std::vector<double> per_horizon_mse;  // one entry per forecast step
  std::vector<double> per_horizon_mae;
  std::int64_t windows = 0;
  std::int64_t param_count = 0;
  double seconds_per_window = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

namespace detail {

inline int worker_count(std::int64_t jobs) {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("CANET_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) hw = std::min(hw, cap);
  }
  return static_cast<int>(std::min<std::int64_t>(hw, std::max<std::int64_t>(jobs, 1)));
}

}  // namespace detail

// Deterministic parallel evaluation: the batch partition is fixed, workers
// take batches round-robin, and partial sums merge in batch order, so the
// metrics are bitwise independent of the worker count.
template <class T>
EvalReport evaluate(Model<T>& model, const WindowBatch<T>& data,
                    std::int64_t batch_size = 256) {
  if (batch_size < 1) throw config_error("eval batch_size must be >= 1");
  const std::int64_t B = data.count();
  if (B == 0) throw config_error("evaluate: no windows");
  const std::int64_t O = data.targets.dim(2);
  const std::int64_t n_batches = (B + batch_size - 1) / batch_size;

  struct PartialSums {
    std::vector<double> sq, ab;  // per horizon step
    std::int64_t lanes = 0;      // windows * channels accumulated
  };
  std::vector<PartialSums> partials(static_cast<std::size_t>(n_batches));

  const auto run_batch = [&](std::int64_t bi) {
    const std::int64_t lo = bi * batch_size;
    const std::int64_t hi = std::min(B, lo + batch_size);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(hi - lo));
    std::iota(idx.begin(), idx.end(), lo);
    auto chunk = gather_windows(data, idx);
    auto fwd = model_forward(model, chunk.inputs, /*training=*/false, nullptr);

    auto& p = partials[static_cast<std::size_t>(bi)];
    p.sq.assign(static_cast<std::size_t>(O), 0.0);
    p.ab.assign(static_cast<std::size_t>(O), 0.0);
    const auto& pv = fwd.output.values();
    const auto& tv = chunk.targets.values();
    const std::int64_t lanes = chunk.inputs.dim(0) * chunk.inputs.dim(1);
    for (std::int64_t lane = 0; lane < lanes; ++lane) {
      for (std::int64_t t = 0; t < O; ++t) {
        const auto i = static_cast<std::size_t>(lane * O + t);
        const double d = static_cast<double>(pv[i]) - static_cast<double>(tv[i]);
        p.sq[static_cast<std::size_t>(t)] += d * d;
        p.ab[static_cast<std::size_t>(t)] += std::abs(d);
      }
    }
    p.lanes = lanes;
  };

  const auto start = std::chrono::steady_clock::now();
  const int workers = detail::worker_count(n_batches);
  if (workers <= 1) {
    for (std::int64_t bi = 0; bi < n_batches; ++bi) run_batch(bi);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::int64_t bi = w; bi < n_batches; bi += workers) run_batch(bi);
      });
    }
    for (auto& th : pool) th.join();
  }
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;

  EvalReport r;
  r.per_horizon_mse.assign(static_cast<std::size_t>(O), 0.0);
  r.per_horizon_mae.assign(static_cast<std::size_t>(O), 0.0);
  std::int64_t lanes = 0;
  for (const auto& p : partials) {  // in batch order: worker-count invariant
    for (std::int64_t t = 0; t < O; ++t) {
      r.per_horizon_mse[static_cast<std::size_t>(t)] += p.sq[static_cast<std::size_t>(t)];
      r.per_horizon_mae[static_cast<std::size_t>(t)] += p.ab[static_cast<std::size_t>(t)];
    }
    lanes += p.lanes;
  }
  for (std::int64_t t = 0; t < O; ++t) {
    r.per_horizon_mse[static_cast<std::size_t>(t)] /= static_cast<double>(lanes);
    r.per_horizon_mae[static_cast<std::size_t>(t)] /= static_cast<double>(lanes);
    r.mse += r.per_horizon_mse[static_cast<std::size_t>(t)];
    r.mae += r.per_horizon_mae[static_cast<std::size_t>(t)];
  }
  r.mse /= static_cast<double>(O);
  r.mae /= static_cast<double>(O);
  if (!std::isfinite(r.mse) || !std::isfinite(r.mae)) {
    throw numeric_error("evaluation metrics are not finite");
  }
  r.windows = B;
  r.param_count = trainable_param_count(model);
  r.seconds_per_window = elapsed.count() / static_cast<double>(B);
  r.seed = model.config.seed;
  r.config_hash = config_hash(model.config);
  return r;
}

// --------------------------------------------------------------------------
// Training loop
// --------------------------------------------------------------------------

struct TrainHistory {
  std::vector<double> step_losses;       // every optimization step
  std::vector<double> epoch_train_loss;  // mean step loss per epoch
  std::vector<double> epoch_val_mse;
  std::int64_t best_epoch = -1;
  double best_val_mse = 0.0;
  bool early_stopped = false;
};

namespace detail {

template <class T>
std::map<std::string, std::vector<T>> snapshot_params(Model<T>& m) {
  std::map<std::string, std::vector<T>> snap;
  visit_params(m, [&](const std::string& n, Tensor<T>& t, bool) { snap[n] = t.values(); });
  return snap;
}

template <class T>
void restore_params(Model<T>& m, const std::map<std::string, std::vector<T>>& snap) {
  visit_params(m, [&](const std::string& n, Tensor<T>& t, bool trainable) {
    t = Tensor<T>(t.shape(), snap.at(n), trainable);
  });
}

}  // namespace detail

// Epoch loop with seeded shuffling, Adam on l2_loss, per-epoch validation
// MSE, early stopping, and restoration of the best-validation parameters.
template <class T>
TrainHistory train(Model<T>& model, const WindowBatch<T>& train_data,
                   const WindowBatch<T>& val_data, const TrainConfig& tc) {
  tc.validate();
  if (train_data.count() == 0) throw config_error("train: no training windows");
  if (val_data.count() == 0) throw config_error("train: no validation windows");

  auto shuffle_eng = make_stream(tc.seed, "shuffle");
  auto dropout_eng = make_stream(tc.seed, "dropout");
  Adam<T> opt(AdamConfig{tc.learning_rate, 0.9, 0.999, 1e-8});

  TrainHistory hist;
  auto best = detail::snapshot_params(model);
  hist.best_val_mse = std::numeric_limits<double>::infinity();
  std::int64_t bad_epochs = 0;

  std::vector<std::int64_t> order(static_cast<std::size_t>(train_data.count()));
  std::iota(order.begin(), order.end(), 0);

  for (std::int64_t epoch = 0; epoch < tc.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_eng);
    double epoch_loss = 0.0;
    std::int64_t epoch_steps = 0;

    for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(tc.batch_size)) {
      const auto hi = std::min(order.size(), lo + static_cast<std::size_t>(tc.batch_size));
      std::vector<std::int64_t> idx(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                    order.begin() + static_cast<std::ptrdiff_t>(hi));
      auto batch = gather_windows(train_data, idx);

      Tape<T> tape;
      Tensor<T> loss;
      std::vector<std::pair<std::size_t, BatchNormUpdate<T>>> bn_updates;
      {
        auto scope = tape.activate();
        auto fwd = model_forward(model, batch.inputs, /*training=*/true, &dropout_eng);
        loss = l2_loss(fwd.output, batch.targets);
        bn_updates = std::move(fwd.bn_updates);
      }
      const double loss_value = static_cast<double>(loss.item());
      if (!std::isfinite(loss_value)) {
        throw numeric_error("non-finite training loss at epoch " + std::to_string(epoch) +
                            ", step " + std::to_string(epoch_steps) + " (global step " +
                            std::to_string(opt.steps_taken()) + ")");
      }
      tape.backward(loss);
      opt.step(model);
      apply_bn_updates(model, bn_updates);
      hist.step_losses.push_back(loss_value);
      epoch_loss += loss_value;
      ++epoch_steps;
    }
    hist.epoch_train_loss.push_back(epoch_loss / static_cast<double>(epoch_steps));

    const double val_mse = evaluate(model, val_data).mse;
    hist.epoch_val_mse.push_back(val_mse);
    if (val_mse < hist.best_val_mse) {
      hist.best_val_mse = val_mse;
      hist.best_epoch = epoch;
      best = detail::snapshot_params(model);
      bad_epochs = 0;
    } else {
      ++bad_epochs;
      if (bad_epochs >= tc.patience) {
        hist.early_stopped = true;
        break;
      }
    }
  }
  detail::restore_params(model, best);
  return hist;
}

// --------------------------------------------------------------------------
// Naive baselines
// --------------------------------------------------------------------------

namespace detail {

template <class T>
EvalReport report_for_predictions(const Tensor<T>& pred, const WindowBatch<T>& data) {
  const std::int64_t O = data.targets.dim(2);
  const std::int64_t lanes = data.targets.dim(0) * data.targets.dim(1);
  EvalReport r;
  r.per_horizon_mse.assign(static_cast<std::size_t>(O), 0.0);
  r.per_horizon_mae.assign(static_cast<std::size_t>(O), 0.0);
  for (std::int64_t lane = 0; lane < lanes; ++lane) {
    for (std::int64_t t = 0; t < O; ++t) {
      const auto i = static_cast<std::size_t>(lane * O + t);
      const double d = static_cast<double>(pred.values()[i]) -
                       static_cast<double>(data.targets.values()[i]);
      r.per_horizon_mse[static_cast<std::size_t>(t)] += d * d;
      r.per_horizon_mae[static_cast<std::size_t>(t)] += std::abs(d);
    }
  }
  for (std::int64_t t = 0; t < O; ++t) {
    r.per_horizon_mse[static_cast<std::size_t>(t)] /= static_cast<double>(lanes);
    r.per_horizon_mae[static_cast<std::size_t>(t)] /= static_cast<double>(lanes);
    r.mse += r.per_horizon_mse[static_cast<std::size_t>(t)];
    r.mae += r.per_horizon_mae[static_cast<std::size_t>(t)];
  }
  r.mse /= static_cast<double>(O);
  r.mae /= static_cast<double>(O);
  r.windows = data.count();
  return r;
}

}  // namespace detail

// ŷ = x_L repeated across the horizon.
template <class T>
EvalReport last_value_baseline(const WindowBatch<T>& data) {
  const std::int64_t B = data.inputs.dim(0), C = data.inputs.dim(1), L = data.inputs.dim(2);
  const std::int64_t O = data.targets.dim(2);
  std::vector<T> pred(static_cast<std::size_t>(B * C * O));
  for (std::int64_t lane = 0; lane < B * C; ++lane) {
    const T last = data.inputs.values()[static_cast<std::size_t>(lane * L + L - 1)];
    for (std::int64_t t = 0; t < O; ++t) pred[static_cast<std::size_t>(lane * O + t)] = last;
  }
  return detail::report_for_predictions(Tensor<T>(Shape{B, C, O}, std::move(pred)), data);
}

// ŷ_t = x_{L−P+((t−1) mod P)} (1-based t): the last observed period repeats.
template <class T>
EvalReport seasonal_baseline(const WindowBatch<T>& data, std::int64_t period) {
  const std::int64_t B = data.inputs.dim(0), C = data.inputs.dim(1), L = data.inputs.dim(2);
  const std::int64_t O = data.targets.dim(2);
  if (period < 1 || period > L) {
    throw config_error("seasonal baseline period must lie in [1, L], got " +
                       std::to_string(period));
  }
  std::vector<T> pred(static_cast<std::size_t>(B * C * O));
  for (std::int64_t lane = 0; lane < B * C; ++lane) {
    for (std::int64_t t = 0; t < O; ++t) {
      const std::int64_t src = L - period + (t % period);
      pred[static_cast<std::size_t>(lane * O + t)] =
          data.inputs.values()[static_cast<std::size_t>(lane * L + src)];
    }
  }
  return detail::report_for_predictions(Tensor<T>(Shape{B, C, O}, std::move(pred)), data);
}

}  // namespace canet
