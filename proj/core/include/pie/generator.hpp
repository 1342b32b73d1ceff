#pragma once

#include <array>
#include <cstdint>

#include "pie/pdm.hpp"
#include "pie/rng.hpp"
#include "pie/scenario.hpp"

namespace pie::world {

struct GeneratorConfig {
  std::size_t max_agents = 8;
  double unknown_command_rate = 0.0;  // fraction of scenarios relabelled "unknown"
  std::array<double, 5> template_weights{1.0, 1.0, 1.0, 1.0, 1.0};  // order of kAllTemplates

  double speed_cap = 10.0;  // m/s
  double lookahead = 5.0;   // pure-pursuit lookahead, m
  double lane_width = 3.5;
  double shoulder = 1.0;

  std::size_t image_rows = 4;
  std::size_t image_cols = 16;
  double image_noise = 0.05;
  std::size_t lidar_rows = 8;  // pooled resolution stored in the scenario
  std::size_t lidar_cols = 8;
  double bev_extent = 80.0;  // m, square centred on the ego
  double bev_cell = 0.5;     // m per fine raster cell

  std::size_t placement_attempts = 100;
  std::size_t max_regenerations = 20;

  pdm::ScorerConfig scorer;
};

/// Deterministic in (seed, template, config). Throws std::runtime_error when
/// no valid scenario is found within the regeneration budget.
Scenario generate(std::uint64_t seed, Template kind, const GeneratorConfig& cfg = {});

/// Picks the template from the seed using the configured weights.
Template pick_template(std::uint64_t seed, const GeneratorConfig& cfg = {});
Scenario generate(std::uint64_t seed, const GeneratorConfig& cfg = {});

/// Fine BEV raster (rows = x from front to back, cols = y from left to right).
Grid rasterize_bev(const Scenario& sc, double cell, double extent);
/// Block-mean pooling; the raster dimensions must be multiples of the target.
Grid pool(const Grid& fine, std::size_t rows, std::size_t cols);
/// Forward-biased polar rendering: rows are range bands, columns azimuth bins
/// from +60 deg (left) to -60 deg (right), plus Gaussian noise.
Grid render_image(const Scenario& sc, std::size_t rows, std::size_t cols, double noise, Rng& rng);

}  // namespace pie::world
