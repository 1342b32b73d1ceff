#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>

#include "pie/generator.hpp"
#include "pie/model.hpp"

namespace pie::testing {

// Per-process scratch path, so parallel ctest runs do not collide.
inline std::filesystem::path scratch(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("pie_test_" + std::to_string(::getpid()) + "_" + name);
}

// Straight, gently curving lines per class; enough to drive the trajectory head.
inline anchors::AnchorBank line_bank() {
  anchors::AnchorBank bank;
  for (std::size_t c = 0; c < kActionClasses; ++c) {
    for (std::size_t i = 0; i < anchors::kAnchorsPerClass; ++i) {
      Trajectory t;
      const double v = 2.0 + 0.4 * double(i);
      const double curve = (1.0 - double(c)) * 0.02;
      for (std::size_t k = 0; k < kWaypoints; ++k) {
        const double x = v * kWaypointDt * double(k + 1);
        t.points[k] = {x, curve * x * x, 0.0};
      }
      recompute_headings(t);
      bank.classes[c].push_back(t);
    }
  }
  return bank;
}

inline world::GeneratorConfig small_grids() {
  world::GeneratorConfig gc;
  gc.image_rows = 2;
  gc.image_cols = 4;
  gc.lidar_rows = 2;
  gc.lidar_cols = 2;
  gc.max_agents = 3;
  return gc;
}

inline model::ModelConfig toy_model(std::uint64_t seed = 0) {
  const auto gc = small_grids();
  model::ModelConfig mc;
  mc.model_dim = 8;
  mc.state_dim = 4;
  mc.fusion_layers = 1;
  mc.decoder.n_layers = 1;
  mc.decoder.n_agent_slots = 2;
  mc.decoder.n_heads = 2;
  mc.decoder.expert_hidden = 8;
  mc.image_rows = gc.image_rows;
  mc.image_cols = gc.image_cols;
  mc.lidar_rows = gc.lidar_rows;
  mc.lidar_cols = gc.lidar_cols;
  mc.seed = seed;
  return mc;
}

}  // namespace pie::testing
