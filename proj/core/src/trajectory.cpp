#include "pie/trajectory.hpp"

namespace pie {

std::string_view to_string(Command c) {
  switch (c) {
    case Command::left: return "left";
    case Command::straight: return "straight";
    case Command::right: return "right";
    case Command::unknown: return "unknown";
  }
  return "unknown";
}

std::optional<Command> command_from_string(std::string_view s) {
  if (s == "left") return Command::left;
  if (s == "straight") return Command::straight;
  if (s == "right") return Command::right;
  if (s == "unknown") return Command::unknown;
  return std::nullopt;
}

void recompute_headings(Trajectory& traj, double initial_heading) {
  double px = 0.0, py = 0.0, heading = initial_heading;
  for (auto& p : traj.points) {
    const double dx = p.x - px, dy = p.y - py;
    if (std::hypot(dx, dy) > 1e-9) heading = std::atan2(dy, dx);
    p.heading = heading;
    px = p.x;
    py = p.y;
  }
}

}  // namespace pie
