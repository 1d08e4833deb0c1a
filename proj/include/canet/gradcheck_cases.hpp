#pragma once

// ============================================================================
// The standard gradient-check suite.
//
// One named finite-difference case per differentiable block, from the lowest
// primitives (matmul, conv1d, gelu, reduce_stats, rfft/irfft) through each
// architectural block (ASB with a frozen sparsity mask, ICB with frozen
// dropout, dual embedding, style blending gate, AdaIN, external style
// projection, SKPL head) up to the complete tiny model trained against
// l2_loss.  The CLI `gradcheck` subcommand and the acceptance suite both run
// exactly this list, so "gradients verified" always means the same thing.
//
// Every case is deterministic: inputs come from fixed seeds and any internal
// randomness (dropout masks) is re-frozen inside the closure, keeping each
// loss a pure function of its leaves as finite differencing requires.
// ============================================================================

#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "canet/conv_block.hpp"
#include "canet/gradcheck.hpp"
#include "canet/kron.hpp"
#include "canet/model.hpp"
#include "canet/nsan.hpp"
#include "canet/ops.hpp"
#include "canet/patch.hpp"
#include "canet/random.hpp"
#include "canet/spectral.hpp"
#include "canet/tensor.hpp"
#include "canet/train.hpp"

namespace canet {

struct GradCheckCase {
  std::string name;
  GradCheckFn fn;
  std::vector<Tensor<double>> leaves;
};

namespace detail {

inline Tensor<double> rand_leaf(const Shape& shape, std::mt19937_64& eng, double lo = -1.0,
                                double hi = 1.0) {
  return Tensor<double>::uniform(shape, lo, hi, eng);
}

// sum of squares — a scalar loss with non-trivial curvature everywhere
inline Tensor<double> sq_loss(const Tensor<double>& y) { return sum_all(mul(y, y)); }

}  // namespace detail

inline std::vector<GradCheckCase> standard_gradcheck_cases() {
  using detail::rand_leaf;
  using detail::sq_loss;
  std::vector<GradCheckCase> cases;
  auto eng = make_stream(2024, "init");

  // --- primitives ---------------------------------------------------------
  cases.push_back({"matmul",
                   [](const std::vector<Tensor<double>>& l) {
                     return detail::sq_loss(matmul(l[0], l[1]));
                   },
                   {rand_leaf({2, 3, 4}, eng), rand_leaf({4, 5}, eng)}});

  cases.push_back({"conv1d",
                   [](const std::vector<Tensor<double>>& l) {
                     return detail::sq_loss(conv1d(l[0], l[1]));
                   },
                   {rand_leaf({2, 3, 6}, eng), rand_leaf({4, 3, 3}, eng)}});

  cases.push_back({"gelu",
                   [](const std::vector<Tensor<double>>& l) {
                     return detail::sq_loss(gelu(l[0]));
                   },
                   {rand_leaf({3, 5}, eng, -2.0, 2.0)}});

  cases.push_back({"reduce_stats",
                   [](const std::vector<Tensor<double>>& l) {
                     auto [mu, sigma] = reduce_stats(l[0], 1, true, 1e-5);
                     return sum_all(add(mul(mu, mu), mul(sigma, sigma)));
                   },
                   {rand_leaf({2, 6, 3}, eng)}});

  cases.push_back({"rfft_irfft",
                   [](const std::vector<Tensor<double>>& l) {
                     auto s = rfft(l[0]);
                     // scale the spectrum so irfft sees non-trivial inputs
                     ComplexSpectrum<double> t{mul_scalar(s.re, 1.5),
                                               mul_scalar(s.im, -0.5), 7};
                     return detail::sq_loss(irfft(t));
                   },
                   {rand_leaf({2, 7, 2}, eng)}});

  // --- architectural blocks -------------------------------------------------
  {
    auto x = rand_leaf({2, 8, 3}, eng);
    // off-identity filters so every filter entry gets a non-trivial gradient
    auto gr = rand_leaf({5, 3}, eng, 0.5, 1.5);
    auto gi = rand_leaf({5, 3}, eng, -0.3, 0.3);
    auto lr = rand_leaf({5, 3}, eng, -0.4, 0.4);
    auto li = rand_leaf({5, 3}, eng, -0.4, 0.4);
    auto frozen = std::make_shared<const std::vector<double>>(asb_mask(rfft(x), -2.0));
    cases.push_back({"asb_forward",
                     [frozen](const std::vector<Tensor<double>>& l) {
                       AsbParams<double> q;
                       q.global_re = l[1];
                       q.global_im = l[2];
                       q.local_re = l[3];
                       q.local_im = l[4];
                       q.threshold_logit = Tensor<double>::scalar(-2.0);
                       return detail::sq_loss(asb_forward(l[0], q, frozen.get()));
                     },
                     {x, gr, gi, lr, li}});
  }

  {
    auto p = make_icb_params<double>(3, 0.3, eng);
    cases.push_back({"icb_forward",
                     [](const std::vector<Tensor<double>>& l) {
                       IcbParams<double> q;
                       q.conv_a_w = l[1];
                       q.conv_a_b = l[2];
                       q.conv_b_w = l[3];
                       q.conv_b_b = l[4];
                       q.conv_out_w = l[5];
                       q.conv_out_b = l[6];
                       q.dropout_p = 0.3;
                       // identical dropout mask on every evaluation
                       auto mask_rng = make_stream(31337, "dropout");
                       return detail::sq_loss(icb_forward(l[0], q, true, &mask_rng));
                     },
                     {rand_leaf({2, 4, 3}, eng), p.conv_a_w, p.conv_a_b, p.conv_b_w,
                      p.conv_b_b, p.conv_out_w, p.conv_out_b}});
  }

  {
    auto e = make_dual_embedding<double>(4, 5, eng);
    cases.push_back(
        {"dual_embed",
         [](const std::vector<Tensor<double>>& l) {
           DualEmbedding<double> emb{l[1], l[2], l[3], l[4]};
           auto [stream, style] = dual_embed(l[0], emb);
           // touch both outputs so all four parameter tensors get gradients
           return sum_all(add(mul(stream, stream), mul(style, style)));
         },
         {rand_leaf({2, 3, 4}, eng), e.w_stream, e.b_stream, e.w_style, e.b_style}});
  }

  {
    auto g = make_gate_params<double>(3, 0.3, eng);
    cases.push_back({"style_blending_gate",
                     [](const std::vector<Tensor<double>>& l) {
                       GateParams<double> q;
                       q.w_mu_i = l[2];
                       q.w_sigma_i = l[3];
                       q.w_mu_e = l[4];
                       q.w_sigma_e = l[5];
                       q.shift_w = l[6];
                       q.shift_b = l[7];
                       q.scale_w = l[8];
                       q.scale_b = l[9];
                       q.alpha = 0.3;
                       auto internal = instance_stats(l[0]);
                       StyleStats<double> external{l[1],
                                                   Tensor<double>::full({2, 1, 3}, 0.8)};
                       auto style = style_blending_gate(internal, external, q);
                       return sum_all(add(mul(style.mu, style.mu),
                                          mul(style.sigma, style.sigma)));
                     },
                     {rand_leaf({2, 4, 3}, eng), rand_leaf({2, 1, 3}, eng), g.w_mu_i,
                      g.w_sigma_i, g.w_mu_e, g.w_sigma_e, g.shift_w, g.shift_b, g.scale_w,
                      g.scale_b}});
  }

  cases.push_back({"adain",
                   [](const std::vector<Tensor<double>>& l) {
                     StyleStats<double> style{l[1], l[2]};
                     return detail::sq_loss(adain(l[0], style));
                   },
                   {rand_leaf({2, 5, 3}, eng), rand_leaf({2, 1, 3}, eng),
                    rand_leaf({2, 1, 3}, eng, 0.5, 1.5)}});

  cases.push_back({"external_style",
                   [](const std::vector<Tensor<double>>& l) {
                     RawStats<double> raw{l[0], l[1]};
                     ExternalProj<double> proj{l[2], l[3], l[4], l[5]};
                     auto style = external_style(raw, proj);
                     return sum_all(
                         add(mul(style.mu, style.mu), mul(style.sigma, style.sigma)));
                   },
                   {rand_leaf({2, 3}, eng), rand_leaf({2, 3}, eng, 0.5, 1.5),
                    rand_leaf({1, 4}, eng), rand_leaf({4}, eng), rand_leaf({1, 4}, eng),
                    rand_leaf({4}, eng)}});

  {
    auto f = make_kron_factors<double>(6, 6, 2, eng);
    cases.push_back({"skpl_forward",
                     [m = f.m, n = f.n, shape = f.shape](const std::vector<Tensor<double>>& l) {
                       KronFactors<double> q;
                       q.m = m;
                       q.n = n;
                       q.shape = shape;
                       q.terms.push_back({l[1], l[2]});
                       q.terms.push_back({l[3], l[4]});
                       q.bias = l[5];
                       return detail::sq_loss(skpl_forward(l[0], q));
                     },
                     {rand_leaf({3, 6}, eng), f.terms[0].a, f.terms[0].b, f.terms[1].a,
                      f.terms[1].b, f.bias}});
  }

  // --- complete model against the training loss ----------------------------
  {
    ModelConfig cfg;
    cfg.look_back = 16;
    cfg.horizon = 4;
    cfg.channels = 2;
    cfg.patch_sizes = {4, 8};
    cfg.embed_dim = 8;
    cfg.dropout = 0.0;
    cfg.blend_alpha = 0.5;
    cfg.skpl_stack = 2;
    cfg.seed = 7;
    auto model = std::make_shared<Model<double>>(make_model<double>(cfg));

    std::vector<Tensor<double>> leaves;
    visit_params(*model, [&](const std::string&, Tensor<double>& t, bool trainable) {
      if (trainable) leaves.push_back(t);
    });
    leaves.push_back(rand_leaf({2, 2, 16}, eng));  // input joins the leaves
    auto target = rand_leaf({2, 2, 4}, eng);

    cases.push_back({"full_model_l2",
                     [model, target](const std::vector<Tensor<double>>& ls) {
                       Model<double> probe = *model;
                       std::size_t i = 0;
                       visit_params(probe,
                                    [&](const std::string&, Tensor<double>& t, bool trainable) {
                                      if (trainable) t = ls[i++];
                                    });
                       auto fwd = model_forward(probe, ls[i], /*training=*/false, nullptr);
                       return l2_loss(fwd.output, target);
                     },
                     std::move(leaves)});
  }

  return cases;
}

// Runs the whole registry; every report carries name/max_err/pass.
inline std::vector<GradCheckReport> run_standard_gradchecks(double h = 1e-5,
                                                            double tol = 1e-4) {
  std::vector<GradCheckReport> reports;
  for (const auto& c : standard_gradcheck_cases()) {
    reports.push_back(check_gradients(c.name, c.fn, c.leaves, h, tol));
  }
  return reports;
}

}  // namespace canet
