#pragma once

#include <array>
#include <cmath>
#include <vector>

namespace pie::geom {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  bool operator==(const Vec2&) const = default;
};

inline Vec2 unit(double heading) { return {std::cos(heading), std::sin(heading)}; }

struct OrientedBox {
  Vec2 center;
  double length = 0.0;  // along heading
  double width = 0.0;
  double heading = 0.0;

  std::array<Vec2, 4> corners() const;
  bool contains(Vec2 p) const;
};

/// Separating-axis overlap test; touching boxes count as overlapping.
bool boxes_overlap(const OrientedBox& a, const OrientedBox& b);

/// Largest projected gap over the four candidate axes: positive when the boxes
/// are separated (a lower bound on their distance), negative when they overlap
/// (minus the smallest penetration depth).
double box_separation(const OrientedBox& a, const OrientedBox& b);

bool segment_intersects_box(Vec2 a, Vec2 b, const OrientedBox& box);

/// Simple polygon (convex or not). Points on the boundary count as inside.
class Polygon {
 public:
  Polygon() = default;
  // Throws std::invalid_argument for fewer than three vertices.
  explicit Polygon(std::vector<Vec2> vertices);

  const std::vector<Vec2>& vertices() const { return vertices_; }
  bool contains(Vec2 p) const;

 private:
  std::vector<Vec2> vertices_;
};

struct PolylineProjection {
  double arc_length = 0.0;  // along the polyline, clamped to [0, length]
  double lateral = 0.0;     // signed, positive to the left
  double distance = 0.0;    // unsigned distance to the closest point
};

class Polyline {
 public:
  Polyline() = default;
  explicit Polyline(std::vector<Vec2> points);

  const std::vector<Vec2>& points() const { return points_; }
  double length() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }
  PolylineProjection project(Vec2 p) const;
  Vec2 point_at(double s) const;
  double heading_at(double s) const;

 private:
  std::vector<Vec2> points_;
  std::vector<double> cumulative_;
};

}  // namespace pie::geom
