#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pie/geometry.hpp"
#include "pie/trajectory.hpp"

namespace pie::world {

/// Ego state at t = 0. The ego frame has x forward, y left, origin at the rear
/// axle, so the pose is (0, 0, 0) for generated scenarios.
struct EgoState {
  Pose pose;
  double speed = 0.0;  // m/s
  double accel = 0.0;  // m/s^2

  bool operator==(const EgoState&) const = default;
};

struct AgentState {
  double x = 0.0;
  double y = 0.0;
  double length = 4.5;
  double width = 1.9;
  double heading = 0.0;
  double vx = 0.0;
  double vy = 0.0;

  // Constant-velocity extrapolation.
  geom::OrientedBox box_at(double t) const {
    return {{x + vx * t, y + vy * t}, length, width, heading};
  }
  bool operator==(const AgentState&) const = default;
};

struct StopLine {
  geom::Vec2 a;
  geom::Vec2 b;
  bool red = false;

  bool operator==(const StopLine&) const = default;
};

/// H x W x C float32 raster, row-major with channels innermost.
struct Grid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<float> values;

  float at(std::size_t r, std::size_t c, std::size_t ch) const { return values[(r * width + c) * channels + ch]; }
  bool operator==(const Grid&) const = default;
};

// Raw grid channels.
inline constexpr std::size_t kRawChannels = 4;
enum Channel : std::size_t { occupancy = 0, velocity_x = 1, velocity_y = 2, road = 3 };

enum class Template { straight_road, left_turn, right_turn, t_junction, crosswalk };

inline constexpr std::array<Template, 5> kAllTemplates = {Template::straight_road, Template::left_turn,
                                                          Template::right_turn, Template::t_junction,
                                                          Template::crosswalk};

std::string_view to_string(Template t);
std::optional<Template> template_from_string(std::string_view s);

inline constexpr std::size_t kHistoryPoses = 4;  // t = -1.5, -1.0, -0.5, 0.0 s

struct Scenario {
  std::string id;
  Template kind = Template::straight_road;
  std::uint64_t seed = 0;
  Command command = Command::straight;
  EgoState ego;
  std::vector<AgentState> agents;
  std::vector<geom::Vec2> drivable;  // polygon vertices, m
  std::vector<geom::Vec2> route;     // centerline polyline, m
  std::optional<StopLine> stop_line;
  std::array<Pose, kHistoryPoses> history{};
  Trajectory expert;
  Grid image;
  Grid lidar;

  bool operator==(const Scenario&) const = default;
};

}  // namespace pie::world
