#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "cdgc/tensor.hpp"

namespace cdgc {

/// Outcome of a finite-difference comparison; `max_rel_err` is the worst
/// relative error over every coordinate of every checked parameter.
struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_coord = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

/// Compare reverse-mode gradients of a scalar function against central
/// differences.  `f` must rebuild the scalar output from the current values of
/// `params` on every call; each parameter must have requires_grad set.
/// Relative error per coordinate is |a - n| / max(1e-8, |a| + |n|).
template <typename T, typename Fn>
GradCheckReport grad_check(Fn&& f, std::vector<Tensor<T>>& params, double eps = 1e-4) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw UsageError("grad_check: step size must lie in [1e-7, 1e-3]");
  }
  for (Tensor<T>& p : params) {
    if (!p.requires_grad()) throw UsageError("grad_check: parameter does not require gradients");
    p.zero_grad();
  }

  Tensor<T> loss = f();
  if (loss.numel() != 1) {
    throw UsageError("grad_check: function output must be scalar, got " + shape_str(loss.shape()));
  }
  loss.backward();

  std::vector<std::vector<T>> analytic;
  analytic.reserve(params.size());
  for (Tensor<T>& p : params) {
    analytic.emplace_back(p.grad().begin(), p.grad().end());
  }

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto vals = params[pi].mutable_values();
    for (std::size_t ci = 0; ci < vals.size(); ++ci) {
      const T saved = vals[ci];
      vals[ci] = saved + static_cast<T>(eps);
      const double up = static_cast<double>(f().item());
      vals[ci] = saved - static_cast<T>(eps);
      const double down = static_cast<double>(f().item());
      vals[ci] = saved;

      const double numeric = (up - down) / (2.0 * eps);
      const double a = static_cast<double>(analytic[pi][ci]);
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = pi;
        report.worst_coord = ci;
        report.analytic_at_worst = a;
        report.numeric_at_worst = numeric;
      }
    }
  }
  return report;
}

}  // namespace cdgc
