#pragma once

// ============================================================================
// Finite-difference gradient checking.
//
// The independent oracle for every analytic gradient in the library: central
// differences
//
//     df/dx_i  ~=  (f(x + h e_i) - f(x - h e_i)) / (2h),  h = 1e-5
//
// evaluated in 64-bit arithmetic, compared elementwise against the tape
// gradient with the scale-aware error
//
//     err_i = |ad_i - fd_i| / max(1, |ad_i|, |fd_i|)
//
// (relative for large gradients, absolute near zero, so finite-difference
// round-off on tiny gradients does not mask real bugs on large ones).  The
// suite-wide tolerance is 1e-4.
//
// The function under test must be a *pure* function of the leaf values: any
// internal randomness (e.g. dropout masks) must be frozen by the caller,
// typically by reseeding a local engine inside the closure.
// ============================================================================

#include <functional>
#include <string>
#include <vector>

#include "canet/ops.hpp"
#include "canet/tensor.hpp"

namespace canet {

struct GradCheckReport {
  std::string name;
  double max_err = 0.0;   // worst scale-aware error over all leaf elements
  double tolerance = 1e-4;
  std::int64_t checked = 0;  // number of scalar derivatives compared
  bool pass = false;
};

// Builds a scalar loss from the given leaves.
using GradCheckFn =
    std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

// Runs one analytic-vs-numeric comparison.  `leaves` carry the evaluation
// point; requires_grad flags on them are ignored (fresh differentiable copies
// are made internally).
inline GradCheckReport check_gradients(const std::string& name,
                                       const GradCheckFn& fn,
                                       const std::vector<Tensor<double>>& leaves,
                                       double h = 1e-5, double tol = 1e-4) {
  GradCheckReport report;
  report.name = name;
  report.tolerance = tol;

  // --- analytic gradients ----------------------------------------------
  std::vector<Tensor<double>> diff_leaves;
  diff_leaves.reserve(leaves.size());
  for (const auto& l : leaves) {
    diff_leaves.emplace_back(l.shape(), l.values(), /*requires_grad=*/true);
  }
  Tape<double> tape;
  Tensor<double> loss;
  {
    auto scope = tape.activate();
    loss = fn(diff_leaves);
  }
  if (loss.numel() != 1) {
    throw contract_error("gradient check '" + name + "' must produce a scalar loss");
  }
  tape.backward(loss);

  // --- numeric gradients -------------------------------------------------
  // Evaluated with no tape active: pure values.
  auto eval = [&](const std::vector<Tensor<double>>& pts) {
    return fn(pts).item();
  };
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const auto& leaf = diff_leaves[li];
    // A leaf that never participated has no gradient buffer: treat as zeros.
    const std::vector<double>* ad = leaf.has_grad() ? &leaf.grad() : nullptr;
    std::vector<double> base = leaf.values();
    for (std::size_t j = 0; j < base.size(); ++j) {
      std::vector<Tensor<double>> pts;
      pts.reserve(leaves.size());
      for (std::size_t k = 0; k < leaves.size(); ++k) {
        if (k == li) {
          auto bumped = base;
          bumped[j] += h;
          pts.emplace_back(leaves[k].shape(), std::move(bumped));
        } else {
          pts.push_back(diff_leaves[k]);
        }
      }
      const double fplus = eval(pts);
      auto bumped = base;
      bumped[j] -= h;
      pts[li] = Tensor<double>(leaves[li].shape(), std::move(bumped));
      const double fminus = eval(pts);

      const double fd = (fplus - fminus) / (2.0 * h);
      const double an = ad ? (*ad)[j] : 0.0;
      const double err =
          std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
      if (err > report.max_err) report.max_err = err;
      ++report.checked;
    }
  }
  report.pass = report.max_err < tol;
  return report;
}

}  // namespace canet
