#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>

namespace pie {

inline constexpr std::size_t kWaypoints = 8;
inline constexpr double kWaypointDt = 0.5;  // 2 Hz
inline constexpr double kHorizon = kWaypoints * kWaypointDt;

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;

  bool operator==(const Pose&) const = default;
};

/// Eight ego-frame waypoints at 0.5 s, 1.0 s, ..., 4.0 s.
struct Trajectory {
  std::array<Pose, kWaypoints> points{};

  bool operator==(const Trajectory&) const = default;
};

/// Navigation directive. Only the first three are action classes.
enum class Command { left = 0, straight = 1, right = 2, unknown = 3 };

inline constexpr std::size_t kActionClasses = 3;

std::string_view to_string(Command c);
std::optional<Command> command_from_string(std::string_view s);

/// Wraps to (-pi, pi].
inline double wrap_angle(double a) {
  if (a > -std::numbers::pi && a <= std::numbers::pi) return a;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(a + std::numbers::pi, two_pi);
  if (w <= 0.0) w += two_pi;
  return w - std::numbers::pi;
}

/// Recomputes headings from consecutive waypoint differences, starting from
/// the origin for the first waypoint. Zero-length steps keep the previous
/// heading.
void recompute_headings(Trajectory& traj, double initial_heading = 0.0);

}  // namespace pie
