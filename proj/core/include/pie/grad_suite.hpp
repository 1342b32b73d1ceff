#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pie {

struct GradCase {
  std::string name;
  bool primitive = false;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool finite = true;
  std::size_t checked = 0;  // components compared

  bool passed() const { return finite && max_rel_error < tolerance; }
};

inline constexpr double kPrimitiveTolerance = 1e-6;
inline constexpr double kCompositeTolerance = 1e-5;

/// Central-difference checks over every differentiable primitive and every
/// composite block at toy sizes, ending with the full model to its scalar
/// training loss. Inputs are drawn from `seed`.
std::vector<GradCase> run_grad_suite(std::uint64_t seed = 0);

}  // namespace pie
