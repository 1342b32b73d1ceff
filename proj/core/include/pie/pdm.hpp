#pragma once

#include <span>
#include <string>
#include <vector>

#include "pie/scenario.hpp"

namespace pie::pdm {

struct ScorerConfig {
  double dt = 0.1;
  double ttc_horizon = 1.0;
  double max_lon_accel = 4.0;
  double max_jerk = 8.0;
  double lk_max_offset = 0.8;
  double ec_max_accel_change = 2.0;
  double ddc_min_progress = -0.5;
  double ep_min_expert_progress = 0.1;
  double ego_length = 4.0;
  double ego_width = 1.85;
  double rear_axle_to_center = 1.0;  // footprint center ahead of the rear axle
};

struct RolloutState {
  double time = 0.0;
  Pose pose;
  double speed = 0.0;
  double accel = 0.0;
  double jerk = 0.0;
};

/// Natural cubic spline through the current pose and the 8 waypoints, sampled
/// every `dt` over the horizon. Speed, acceleration and jerk are successive
/// backward differences of the sampled positions, with leading undefined
/// values copied from the first defined one. Heading follows the path tangent,
/// reversing keeps the heading with a negative speed, and steps under 1 cm
/// hold the previous heading.
std::vector<RolloutState> rollout(const Trajectory& traj, const world::EgoState& ego,
                                  const ScorerConfig& cfg = {});

geom::OrientedBox ego_footprint(const Pose& pose, const ScorerConfig& cfg = {});

struct Subscores {
  double nc = 1.0, dac = 1.0, ep = 1.0, ttc = 1.0, c = 1.0;
  double hc = 1.0, lk = 1.0, ec = 1.0, ddc = 1.0, tlc = 1.0;

  bool operator==(const Subscores&) const = default;
};

/// Arc-length of the rollout's end point along the route, minus that of its start.
double route_progress(const std::vector<RolloutState>& states, const geom::Polyline& route);

Subscores subscores(const std::vector<RolloutState>& states, const world::Scenario& scenario,
                    const ScorerConfig& cfg = {});

/// Rollout plus subscores, with the scenario's expert as the progress reference.
Subscores score_trajectory(const Trajectory& traj, const world::Scenario& scenario, const ScorerConfig& cfg = {});

/// Comfort test on the recorded 2 Hz ego history.
double history_comfort(const world::Scenario& scenario, const ScorerConfig& cfg = {});

double pdms(const Subscores& s);
double epdms(const Subscores& s);

struct ScoreRecord {
  std::string id;
  Subscores sub;
  double pdms = 0.0;
  double epdms = 0.0;
};

ScoreRecord make_record(std::string id, const Subscores& s);

struct Aggregate {
  std::size_t count = 0;
  double mean_pdms = 0.0;
  double mean_epdms = 0.0;
  Subscores mean_sub;
  // The formulas applied to the mean subscores. Differs from the mean score in
  // general because the gates multiply.
  double pdms_of_means = 0.0;
  double epdms_of_means = 0.0;
};

Aggregate aggregate(std::span<const ScoreRecord> records);

/// Straight line along the current heading at the current speed.
Trajectory constant_velocity_plan(const world::EgoState& ego);

}  // namespace pie::pdm
