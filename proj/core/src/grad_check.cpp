#include "pie/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pie {

GradCheckResult grad_check(const std::function<Tensor()>& f, Tensor x, double h) {
  if (!(h > 0.0 && h <= 1e-3)) throw std::invalid_argument("grad_check: step must be in (0, 1e-3]");
  if (!x.is_leaf()) throw std::invalid_argument("grad_check: x must be a leaf tensor");
  const bool had_grad = x.requires_grad();
  x.set_requires_grad(true);
  x.zero_grad();

  GradCheckResult result;
  Tensor out = f();
  if (out.size() != 1) throw ShapeError("grad_check: f must return a scalar, got " + shape_str(out.shape()));
  backward(out);
  std::vector<double> analytic(x.size(), 0.0);
  if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
  x.zero_grad();

  NoGradGuard no_grad;
  auto values = x.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double fp = f().item();
    values[i] = saved - h;
    const double fm = f().item();
    values[i] = saved;
    const double numeric = (fp - fm) / (2.0 * h);
    if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) {
      result.finite = false;
      result.worst_index = i;
      result.max_rel_error = std::numeric_limits<double>::infinity();
      continue;
    }
    const double err = std::fabs(analytic[i] - numeric) / std::max(1.0, std::fabs(analytic[i]));
    if (err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_index = i;
    }
  }
  x.set_requires_grad(had_grad);
  return result;
}

GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double h) {
  return grad_check([&]() { return f(x); }, x, h);
}

}  // namespace pie
