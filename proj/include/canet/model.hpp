#pragma once

// ============================================================================
// Full CANet model assembly.
//
// forward(x: [B, C, L]) pipeline:
//   1. instance_normalize — per (window, channel) z-score over L; the (mu,
//      sigma) pair doubles as the external style source (RawStats).
//   2. per layer l (one per patch size): patchify -> embed ->
//      ASB (flag) -> ICB (flag) -> NSAN (gate + adain) or baseline norm.
//      With norm_kind = nsan the layer embeds the patches twice (stream +
//      internal style); otherwise the style branch does not exist at all —
//      its parameters are absent from the registry and the checkpoint.
//   3. layer streams are mean-pooled over the patch axis to width D and
//      concatenated to [M, D * num_layers].
//   4. SKPL head maps to O values per instance; reshape to [B, C, O].
//   5. denormalize by RawStats.
//
// The forward pass is a pure function of (params, input, rng state,
// training flag); batch-norm running-buffer changes are *returned* to the
// caller rather than applied, so concurrent evaluation of a frozen model is
// safe by construction.
//
// Parameter naming (checkpoint key space) is hierarchical and stable:
//   external.{mu,sigma}.{w,b}                  when nsan + gate
//   layer<k>.embed.stream.{w,b}
//   layer<k>.embed.style.{w,b}                 when nsan
//   layer<k>.asb.{global_re,global_im,local_re,local_im,threshold}
//   layer<k>.icb.{conv_a,conv_b,out}.{w,b}
//   layer<k>.gate.{w_mu_i,w_sigma_i,w_mu_e,w_sigma_e,shift,scale}.{...}
//   layer<k>.norm.{gamma,beta,running_mean,running_var}   when not nsan
//   head.term<k>.{a,b}, head.bias
// ============================================================================

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "canet/conv_block.hpp"
#include "canet/error.hpp"
#include "canet/kron.hpp"
#include "canet/nsan.hpp"
#include "canet/patch.hpp"
#include "canet/random.hpp"
#include "canet/spectral.hpp"

namespace canet {

// --------------------------------------------------------------------------
// Config
// --------------------------------------------------------------------------

struct ModelConfig {
  std::int64_t look_back = 96;  // L
  std::int64_t horizon = 24;    // O
  std::int64_t channels = 1;    // C
  std::vector<std::int64_t> patch_sizes = {8, 32};
  std::int64_t embed_dim = 32;  // D
  double dropout = 0.3;
  double blend_alpha = 0.5;
  std::int64_t skpl_stack = 2;
  bool use_asb = true;
  bool use_icb = true;
  bool use_mrp = true;
  bool use_blending_gate = true;
  NormKind norm_kind = NormKind::nsan;
  std::uint64_t seed = 42;

  // Table-5 protocol: dropping multi-resolution patching fixes one patch
  // size of 16 regardless of the configured list.
  std::vector<std::int64_t> effective_patch_sizes() const {
    return use_mrp ? patch_sizes : std::vector<std::int64_t>{16};
  }

  void validate() const {
    if (look_back < 1 || horizon < 1 || channels < 1) {
      throw config_error("look_back, horizon and channels must be >= 1");
    }
    if (embed_dim < 1) throw config_error("embed_dim must be >= 1");
    if (patch_sizes.empty()) throw config_error("patch_sizes must not be empty");
    for (auto p : patch_sizes) {
      if (p < 1) throw config_error("patch sizes must be >= 1");
    }
    if (dropout < 0.0 || dropout >= 1.0) {
      throw config_error("dropout must lie in [0, 1), got " + std::to_string(dropout));
    }
    if (blend_alpha < 0.0 || blend_alpha > 1.0) {
      throw config_error("blend_alpha must lie in [0, 1], got " + std::to_string(blend_alpha));
    }
    if (skpl_stack < 1) throw config_error("skpl_stack must be >= 1");
  }

  bool style_branch() const { return norm_kind == NormKind::nsan; }
  bool gated() const { return style_branch() && use_blending_gate; }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"look_back", c.look_back},
                     {"horizon", c.horizon},
                     {"channels", c.channels},
                     {"patch_sizes", c.patch_sizes},
                     {"embed_dim", c.embed_dim},
                     {"dropout", c.dropout},
                     {"blend_alpha", c.blend_alpha},
                     {"skpl_stack", c.skpl_stack},
                     {"use_asb", c.use_asb},
                     {"use_icb", c.use_icb},
                     {"use_mrp", c.use_mrp},
                     {"use_blending_gate", c.use_blending_gate},
                     {"norm_kind", norm_kind_to_string(c.norm_kind)},
                     {"seed", c.seed}};
}

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                const std::vector<std::string>& allowed,
                                const std::string& where) {
  if (!j.is_object()) {
    throw config_error(where + " must be a JSON object");
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& k : allowed) ok = ok || k == it.key();
    if (!ok) {
      throw config_error("unknown key '" + it.key() + "' in " + where);
    }
  }
}

template <class V>
void maybe_get(const nlohmann::json& j, const char* key, V& into) {
  if (j.contains(key)) j.at(key).get_to(into);
}

}  // namespace detail

// Missing keys keep their defaults; unknown keys are rejected.
inline ModelConfig parse_model_config(const nlohmann::json& j) {
  detail::reject_unknown_keys(
      j,
      {"look_back", "horizon", "channels", "patch_sizes", "embed_dim", "dropout",
       "blend_alpha", "skpl_stack", "use_asb", "use_icb", "use_mrp",
       "use_blending_gate", "norm_kind", "seed"},
      "model config");
  ModelConfig c;
  detail::maybe_get(j, "look_back", c.look_back);
  detail::maybe_get(j, "horizon", c.horizon);
  detail::maybe_get(j, "channels", c.channels);
  detail::maybe_get(j, "patch_sizes", c.patch_sizes);
  detail::maybe_get(j, "embed_dim", c.embed_dim);
  detail::maybe_get(j, "dropout", c.dropout);
  detail::maybe_get(j, "blend_alpha", c.blend_alpha);
  detail::maybe_get(j, "skpl_stack", c.skpl_stack);
  detail::maybe_get(j, "use_asb", c.use_asb);
  detail::maybe_get(j, "use_icb", c.use_icb);
  detail::maybe_get(j, "use_mrp", c.use_mrp);
  detail::maybe_get(j, "use_blending_gate", c.use_blending_gate);
  if (j.contains("norm_kind")) {
    c.norm_kind = norm_kind_from_string(j.at("norm_kind").get<std::string>());
  }
  detail::maybe_get(j, "seed", c.seed);
  c.validate();
  return c;
}

// Canonical serialisation (nlohmann objects iterate in sorted key order, so
// the dump is deterministic); used for checkpoint echo and config hashing.
inline std::string canonical_config_string(const ModelConfig& c) {
  nlohmann::json j = c;
  return j.dump();
}

inline std::uint64_t config_hash(const ModelConfig& c) {
  return fnv1a64(canonical_config_string(c));
}

// --------------------------------------------------------------------------
// Parameters
// --------------------------------------------------------------------------

template <class T>
struct RawStats {
  Tensor<T> mu;     // [B, C]
  Tensor<T> sigma;  // [B, C], > 0
};

template <class T>
struct ExternalProj {
  Tensor<T> w_mu;     // [1, D]
  Tensor<T> b_mu;     // [D]
  Tensor<T> w_sigma;  // [1, D]
  Tensor<T> b_sigma;  // [D]
};

template <class T>
struct LayerParams {
  std::int64_t patch_size = 0;
  DualEmbedding<T> embed;                 // style half unused when not nsan
  std::optional<AsbParams<T>> asb;        // present iff use_asb
  std::optional<IcbParams<T>> icb;        // present iff use_icb
  std::optional<GateParams<T>> gate;      // present iff nsan + gate
  std::optional<NormParams<T>> norm;      // present iff norm_kind != nsan
};

template <class T>
struct ModelParams {
  std::optional<ExternalProj<T>> external;  // present iff nsan + gate
  std::vector<LayerParams<T>> layers;
  KronFactors<T> head;
};

template <class T>
struct Model {
  ModelConfig config;
  ModelParams<T> params;
};

// Patch count of layer l under config c.
inline std::int64_t layer_patch_count(const ModelConfig& c, std::int64_t patch) {
  return (c.look_back + patch - 1) / patch;
}

template <class T>
Model<T> make_model(const ModelConfig& cfg) {
  cfg.validate();
  Model<T> m;
  m.config = cfg;
  auto rng = make_stream(cfg.seed, "init");
  const std::int64_t D = cfg.embed_dim;

  if (cfg.gated()) {
    const T bound = static_cast<T>(1.0);  // fan_in = 1 for the 1 -> D maps
    ExternalProj<T> ext;
    ext.w_mu = Tensor<T>::uniform({1, D}, -bound, bound, rng, true);
    ext.b_mu = Tensor<T>::zeros({D}, true);
    ext.w_sigma = Tensor<T>::uniform({1, D}, -bound, bound, rng, true);
    ext.b_sigma = Tensor<T>::zeros({D}, true);
    m.params.external = std::move(ext);
  }

  for (auto p : cfg.effective_patch_sizes()) {
    LayerParams<T> layer;
    layer.patch_size = p;
    layer.embed = make_dual_embedding<T>(p, D, rng);
    if (!cfg.style_branch()) {
      // the style half never participates; drop it so the registry (and the
      // checkpoint) reflect exactly the live parameters
      layer.embed.w_style = Tensor<T>();
      layer.embed.b_style = Tensor<T>();
    }
    if (cfg.use_asb) {
      const std::int64_t N = layer_patch_count(cfg, p);
      layer.asb = make_asb_params<T>(N / 2 + 1, D);
    }
    if (cfg.use_icb) {
      layer.icb = make_icb_params<T>(D, cfg.dropout, rng);
    }
    if (cfg.gated()) {
      layer.gate = make_gate_params<T>(D, cfg.blend_alpha, rng);
    }
    if (!cfg.style_branch()) {
      layer.norm = make_norm_params<T>(D);
    }
    m.params.layers.push_back(std::move(layer));
  }

  const auto width = D * static_cast<std::int64_t>(cfg.effective_patch_sizes().size());
  m.params.head = make_kron_factors<T>(cfg.horizon, width, cfg.skpl_stack, rng);
  return m;
}

// Visits every parameter tensor in a fixed order.  fn(name, tensor,
// trainable); running-stat buffers visit with trainable = false.
template <class T, class Fn>
void visit_params(Model<T>& m, Fn&& fn) {
  const auto& cfg = m.config;
  auto& p = m.params;
  if (p.external) {
    fn("external.mu.w", p.external->w_mu, true);
    fn("external.mu.b", p.external->b_mu, true);
    fn("external.sigma.w", p.external->w_sigma, true);
    fn("external.sigma.b", p.external->b_sigma, true);
  }
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& layer = p.layers[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    fn(pre + "embed.stream.w", layer.embed.w_stream, true);
    fn(pre + "embed.stream.b", layer.embed.b_stream, true);
    if (cfg.style_branch()) {
      fn(pre + "embed.style.w", layer.embed.w_style, true);
      fn(pre + "embed.style.b", layer.embed.b_style, true);
    }
    if (layer.asb) {
      fn(pre + "asb.global_re", layer.asb->global_re, true);
      fn(pre + "asb.global_im", layer.asb->global_im, true);
      fn(pre + "asb.local_re", layer.asb->local_re, true);
      fn(pre + "asb.local_im", layer.asb->local_im, true);
      fn(pre + "asb.threshold", layer.asb->threshold_logit, true);
    }
    if (layer.icb) {
      fn(pre + "icb.conv_a.w", layer.icb->conv_a_w, true);
      fn(pre + "icb.conv_a.b", layer.icb->conv_a_b, true);
      fn(pre + "icb.conv_b.w", layer.icb->conv_b_w, true);
      fn(pre + "icb.conv_b.b", layer.icb->conv_b_b, true);
      fn(pre + "icb.out.w", layer.icb->conv_out_w, true);
      fn(pre + "icb.out.b", layer.icb->conv_out_b, true);
    }
    if (layer.gate) {
      fn(pre + "gate.w_mu_i", layer.gate->w_mu_i, true);
      fn(pre + "gate.w_sigma_i", layer.gate->w_sigma_i, true);
      fn(pre + "gate.w_mu_e", layer.gate->w_mu_e, true);
      fn(pre + "gate.w_sigma_e", layer.gate->w_sigma_e, true);
      fn(pre + "gate.shift.w", layer.gate->shift_w, true);
      fn(pre + "gate.shift.b", layer.gate->shift_b, true);
      fn(pre + "gate.scale.w", layer.gate->scale_w, true);
      fn(pre + "gate.scale.b", layer.gate->scale_b, true);
    }
    if (layer.norm) {
      fn(pre + "norm.gamma", layer.norm->gamma, true);
      fn(pre + "norm.beta", layer.norm->beta, true);
      fn(pre + "norm.running_mean", layer.norm->running_mean, false);
      fn(pre + "norm.running_var", layer.norm->running_var, false);
    }
  }
  for (std::size_t k = 0; k < p.head.terms.size(); ++k) {
    const std::string pre = "head.term" + std::to_string(k) + ".";
    fn(pre + "a", p.head.terms[k].a, true);
    fn(pre + "b", p.head.terms[k].b, true);
  }
  fn("head.bias", p.head.bias, true);
}

// Total trainable parameter scalar count.
template <class T>
std::int64_t trainable_param_count(Model<T>& m) {
  std::int64_t total = 0;
  visit_params(m, [&](const std::string&, Tensor<T>& t, bool trainable) {
    if (trainable) total += t.numel();
  });
  return total;
}

// --------------------------------------------------------------------------
// Normalisation wrapper
// --------------------------------------------------------------------------

// Per (window, channel) z-score over the look-back axis.  The divisor is
// sqrt(max(var, eps^2)): exact for any window whose variance is above the
// floor, which is what makes the affine-invariance (anti-collapse contrast)
// checks hold to machine precision; constant windows normalise to zeros.
template <class T>
std::pair<Tensor<T>, RawStats<T>> instance_normalize(const Tensor<T>& x) {
  if (x.ndim() != 3) {
    throw shape_error("instance_normalize expects [B, C, L], got " + format_shape(x.shape()));
  }
  const std::int64_t B = x.dim(0), C = x.dim(1);
  const T floor = static_cast<T>(kStatsEps * kStatsEps);
  auto m = mean_axis(x, 2, true);  // [B, C, 1]
  auto centered = sub(x, m);
  auto var = mean_axis(mul(centered, centered), 2, true);
  auto sigma = sqrt(clamp_min(var, floor));
  auto xn = div(centered, sigma);
  RawStats<T> stats{reshape(m, {B, C}), reshape(sigma, {B, C})};
  return {xn, stats};
}

template <class T>
Tensor<T> denormalize(const Tensor<T>& y_norm, const RawStats<T>& stats) {
  const std::int64_t B = stats.mu.dim(0), C = stats.mu.dim(1);
  auto sigma = reshape(stats.sigma, {B, C, 1});
  auto mu = reshape(stats.mu, {B, C, 1});
  return add(mul(y_norm, sigma), mu);
}

// Projects the raw per-window statistics into width-D external style stats,
// one instance per (window, channel).
template <class T>
StyleStats<T> external_style(const RawStats<T>& stats, const ExternalProj<T>& proj) {
  const std::int64_t M = stats.mu.numel();
  auto mu_col = reshape(stats.mu, {M, 1, 1});
  auto sigma_col = reshape(stats.sigma, {M, 1, 1});
  StyleStats<T> out;
  out.mu = add(matmul(mu_col, proj.w_mu), proj.b_mu);
  out.sigma = add_scalar(softplus(add(matmul(sigma_col, proj.w_sigma), proj.b_sigma)),
                         static_cast<T>(kStatsEps));
  return out;
}

// --------------------------------------------------------------------------
// Forward
// --------------------------------------------------------------------------

template <class T>
struct ForwardResult {
  Tensor<T> output;    // [B, C, O] in the original scale
  Tensor<T> features;  // [B, C, O] pre-denormalization head output
  RawStats<T> stats;
  // one entry per layer that ran batch-norm in training mode
  std::vector<std::pair<std::size_t, BatchNormUpdate<T>>> bn_updates;
};

template <class T>
ForwardResult<T> model_forward(const Model<T>& m, const Tensor<T>& x,
                               bool training, std::mt19937_64* rng) {
  const auto& cfg = m.config;
  if (x.ndim() != 3 || x.dim(1) != cfg.channels || x.dim(2) != cfg.look_back) {
    throw config_error(
        "input " + format_shape(x.shape()) + " does not match config [B, " +
        std::to_string(cfg.channels) + ", " + std::to_string(cfg.look_back) + "]");
  }
  const std::int64_t B = x.dim(0), C = cfg.channels, O = cfg.horizon;

  ForwardResult<T> result;
  auto [xn, raw] = instance_normalize(x);
  result.stats = raw;

  std::optional<StyleStats<T>> ext;
  if (cfg.gated()) ext = external_style(raw, *m.params.external);

  std::vector<Tensor<T>> pooled;
  for (std::size_t l = 0; l < m.params.layers.size(); ++l) {
    const auto& layer = m.params.layers[l];
    auto patches = patchify(xn, layer.patch_size);  // [M, N, p]

    Tensor<T> stream = add(matmul(patches, layer.embed.w_stream), layer.embed.b_stream);
    Tensor<T> style_emb;
    if (cfg.style_branch()) {
      style_emb = add(matmul(patches, layer.embed.w_style), layer.embed.b_style);
    }

    if (layer.asb) stream = asb_forward(stream, *layer.asb);
    if (layer.icb) stream = icb_forward(stream, *layer.icb, training, rng);

    if (cfg.style_branch()) {
      auto internal = instance_stats(style_emb);
      StyleStats<T> style =
          layer.gate ? style_blending_gate(internal, *ext, *layer.gate) : internal;
      stream = adain(stream, style);
    } else {
      BatchNormUpdate<T> upd;
      const bool bn_train = cfg.norm_kind == NormKind::batch && training;
      stream = baseline_normalize(stream, cfg.norm_kind, *layer.norm, training,
                                  bn_train ? &upd : nullptr);
      if (bn_train) result.bn_updates.emplace_back(l, std::move(upd));
    }
    pooled.push_back(mean_axis(stream, 1, false));  // [M, D]
  }

  auto fused = pooled.size() == 1 ? pooled[0] : concat(pooled, 1);
  auto y = skpl_forward(fused, m.params.head);  // [M, O]
  result.features = reshape(y, {B, C, O});
  result.output = denormalize(result.features, raw);
  return result;
}

// Commits batch-norm running-buffer updates collected by a training forward.
template <class T>
void apply_bn_updates(Model<T>& m,
                      const std::vector<std::pair<std::size_t, BatchNormUpdate<T>>>& updates) {
  for (const auto& [l, upd] : updates) {
    auto& norm = *m.params.layers.at(l).norm;
    norm.running_mean = Tensor<T>(norm.running_mean.shape(), upd.running_mean);
    norm.running_var = Tensor<T>(norm.running_var.shape(), upd.running_var);
  }
}

}  // namespace canet
