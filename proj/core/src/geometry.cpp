#include "pie/geometry.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace pie::geom {

std::array<Vec2, 4> OrientedBox::corners() const {
  const Vec2 f = unit(heading) * (0.5 * length);
  const Vec2 l = unit(heading + 0.5 * 3.14159265358979323846) * (0.5 * width);
  return {center + f + l, center - f + l, center - f - l, center + f - l};
}

bool OrientedBox::contains(Vec2 p) const {
  const Vec2 d = p - center;
  const Vec2 f = unit(heading);
  const double along = d.dot(f);
  const double across = d.cross(f);
  return std::fabs(along) <= 0.5 * length && std::fabs(across) <= 0.5 * width;
}

namespace {

void project_box(const std::array<Vec2, 4>& c, Vec2 axis, double& lo, double& hi) {
  lo = hi = c[0].dot(axis);
  for (std::size_t i = 1; i < 4; ++i) {
    const double v = c[i].dot(axis);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
}

}  // namespace

double box_separation(const OrientedBox& a, const OrientedBox& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  const std::array<Vec2, 4> axes = {unit(a.heading), unit(a.heading + 0.5 * 3.14159265358979323846),
                                    unit(b.heading), unit(b.heading + 0.5 * 3.14159265358979323846)};
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& axis : axes) {
    double alo, ahi, blo, bhi;
    project_box(ca, axis, alo, ahi);
    project_box(cb, axis, blo, bhi);
    const double gap = std::max(blo - ahi, alo - bhi);
    best = std::max(best, gap);
  }
  return best;
}

bool boxes_overlap(const OrientedBox& a, const OrientedBox& b) { return box_separation(a, b) <= 0.0; }

bool segment_intersects_box(Vec2 a, Vec2 b, const OrientedBox& box) {
  // Clip the segment against the box slabs in the box frame.
  const Vec2 f = unit(box.heading);
  const Vec2 l = unit(box.heading + 0.5 * 3.14159265358979323846);
  const Vec2 pa = a - box.center;
  const Vec2 d = b - a;
  double t0 = 0.0, t1 = 1.0;
  const std::array<std::pair<Vec2, double>, 2> slabs = {std::pair{f, 0.5 * box.length},
                                                        std::pair{l, 0.5 * box.width}};
  for (const auto& [axis, half] : slabs) {
    const double p0 = pa.dot(axis);
    const double dv = d.dot(axis);
    if (std::fabs(dv) < 1e-15) {
      if (std::fabs(p0) > half) return false;
      continue;
    }
    double ta = (-half - p0) / dv;
    double tb = (half - p0) / dv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

Polygon::Polygon(std::vector<Vec2> vertices) : vertices_(std::move(vertices)) {
  if (vertices_.size() < 3) {
    throw std::invalid_argument("degenerate polygon: " + std::to_string(vertices_.size()) +
                                " vertices (need at least 3)");
  }
}

bool Polygon::contains(Vec2 p) const {
  const std::size_t n = vertices_.size();
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = vertices_[j], b = vertices_[i];
    // Boundary counts as inside.
    const Vec2 ab = b - a, ap = p - a;
    if (std::fabs(ab.cross(ap)) < 1e-12 && ap.dot(ab) >= 0.0 && ap.dot(ab) <= ab.dot(ab)) return true;
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

Polyline::Polyline(std::vector<Vec2> points) : points_(std::move(points)) {
  if (points_.size() < 2) throw std::invalid_argument("polyline needs at least two points");
  cumulative_.push_back(0.0);
  for (std::size_t i = 1; i < points_.size(); ++i) {
    cumulative_.push_back(cumulative_.back() + (points_[i] - points_[i - 1]).norm());
  }
}

PolylineProjection Polyline::project(Vec2 p) const {
  PolylineProjection best;
  best.distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
    const Vec2 a = points_[i];
    const Vec2 ab = points_[i + 1] - a;
    const double len2 = ab.dot(ab);
    if (len2 <= 0.0) continue;
    double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    const Vec2 q = a + ab * t;
    const double dist = (p - q).norm();
    if (dist < best.distance) {
      best.distance = dist;
      best.arc_length = cumulative_[i] + t * std::sqrt(len2);
      const double side = ab.cross(p - a);
      best.lateral = side >= 0.0 ? dist : -dist;
    }
  }
  return best;
}

Vec2 Polyline::point_at(double s) const {
  s = std::clamp(s, 0.0, length());
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  std::size_t i = it == cumulative_.begin() ? 0 : static_cast<std::size_t>(it - cumulative_.begin()) - 1;
  if (i + 1 >= points_.size()) return points_.back();
  const double seg = cumulative_[i + 1] - cumulative_[i];
  const double t = seg > 0.0 ? (s - cumulative_[i]) / seg : 0.0;
  return points_[i] + (points_[i + 1] - points_[i]) * t;
}

double Polyline::heading_at(double s) const {
  s = std::clamp(s, 0.0, length());
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  std::size_t i = it == cumulative_.begin() ? 0 : static_cast<std::size_t>(it - cumulative_.begin()) - 1;
  if (i + 1 >= points_.size()) i = points_.size() - 2;
  const Vec2 d = points_[i + 1] - points_[i];
  return std::atan2(d.y, d.x);
}

}  // namespace pie::geom
