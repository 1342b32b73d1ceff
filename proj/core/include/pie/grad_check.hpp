#pragma once

#include <functional>

#include "pie/tensor.hpp"

namespace pie {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  bool finite = true;

  bool passed(double tolerance) const { return finite && max_rel_error < tolerance; }
};

/// Compares backward() against central differences for every component of x.
/// x must be a leaf; it is perturbed in place and restored. The error for each
/// component is |analytic - numeric| / max(1, |analytic|).
GradCheckResult grad_check(const std::function<Tensor()>& f, Tensor x, double h = 1e-6);

GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                           double h = 1e-6);

}  // namespace pie
