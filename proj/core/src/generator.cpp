#include "pie/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>

namespace pie::world {

namespace {

using geom::Vec2;

constexpr double kPi = std::numbers::pi;
constexpr double kSimDt = 0.05;
constexpr double kRouteSpacing = 1.0;
constexpr double kComfortDecel = 1.5;
constexpr double kMaxBrake = 3.0;
constexpr double kMaxAccel = 1.5;
constexpr double kMaxJerk = 3.0;
constexpr double kLatAccel = 2.0;
constexpr double kStopMargin = 1.0;
constexpr double kRoadStart = -50.0;
constexpr double kRoadEnd = 90.0;
constexpr double kCrossReach = 50.0;
constexpr double kCurbRadius = 8.0;
constexpr double kPlacementBound = 38.0;

struct RoutePoint {
  Vec2 p;
  double v_limit = 0.0;
};

struct Layout {
  Command command = Command::straight;
  std::vector<Vec2> drivable;
  std::vector<RoutePoint> route;
  std::optional<StopLine> stop_line;
  bool must_stop = false;
  double stop_x = 0.0;  // stop line position along the (straight) route
  double cruise = 0.0;
  double lane_width = 3.5;
  double road_lo = 0.0;  // main road band in y
  double road_hi = 0.0;
  std::optional<double> cross_x;      // cross road centre
  std::optional<double> crosswalk_x;  // crosswalk centre
  bool yield = false;
};

class RouteBuilder {
 public:
  void straight(Vec2 a, Vec2 b, double v) {
    const double len = (b - a).norm();
    const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len / kRouteSpacing)));
    for (std::size_t i = 0; i <= n; ++i) add(a + (b - a) * (double(i) / double(n)), v);
  }
  void arc(Vec2 c, double r, double phi0, double phi1, double v) {
    const auto n =
        std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(r * std::fabs(phi1 - phi0) / kRouteSpacing)));
    for (std::size_t i = 0; i <= n; ++i) {
      const double phi = phi0 + (phi1 - phi0) * double(i) / double(n);
      add(c + Vec2{std::cos(phi), std::sin(phi)} * r, v);
    }
  }
  std::vector<RoutePoint> take() { return std::move(points_); }

 private:
  void add(Vec2 p, double v) {
    if (!points_.empty() && (p - points_.back().p).norm() < 1e-9) {
      points_.back().v_limit = std::min(points_.back().v_limit, v);
      return;
    }
    points_.push_back({p, v});
  }
  std::vector<RoutePoint> points_;
};

struct Corner {
  Vec2 p;
  bool fillet = false;
};

// Polygon from corners, replacing flagged (concave) corners by circular arcs.
std::vector<Vec2> filleted_polygon(const std::vector<Corner>& corners, double radius) {
  std::vector<Vec2> out;
  const std::size_t n = corners.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 p = corners[i].p;
    if (!corners[i].fillet) {
      out.push_back(p);
      continue;
    }
    const Vec2 prev = corners[(i + n - 1) % n].p;
    const Vec2 next = corners[(i + 1) % n].p;
    const Vec2 d_in = (p - prev) * (1.0 / (p - prev).norm());
    const Vec2 d_out = (next - p) * (1.0 / (next - p).norm());
    const Vec2 c = p - d_in * radius + d_out * radius;
    constexpr int kArcPoints = 8;
    for (int k = 0; k <= kArcPoints; ++k) {
      const double phi = 0.5 * kPi * double(k) / kArcPoints;
      out.push_back(c + d_out * (-radius * std::cos(phi)) + d_in * (radius * std::sin(phi)));
    }
  }
  return out;
}

Layout base_layout(const GeneratorConfig& cfg, double cruise) {
  Layout l;
  l.lane_width = cfg.lane_width;
  l.road_lo = -0.5 * cfg.lane_width - cfg.shoulder;
  l.road_hi = 1.5 * cfg.lane_width + cfg.shoulder;
  l.cruise = cruise;
  return l;
}

std::vector<Vec2> straight_polygon(const Layout& l) {
  return {{kRoadStart, l.road_lo}, {kRoadEnd, l.road_lo}, {kRoadEnd, l.road_hi}, {kRoadStart, l.road_hi}};
}

// Cross road of two lanes centred on x = xc, joined to the main road. A T
// junction ends the main road at the cross road.
std::vector<Vec2> junction_polygon(const Layout& l, double xc, bool tee, const GeneratorConfig& cfg) {
  const double half = cfg.lane_width + cfg.shoulder;
  const double xl = xc - half, xr = xc + half;
  const double lo = l.road_lo, hi = l.road_hi;
  std::vector<Corner> c;
  if (tee) {
    c = {{{kRoadStart, lo}},  {{xl, lo}, true},  {{xl, -kCrossReach}}, {{xr, -kCrossReach}},
         {{xr, kCrossReach}}, {{xl, kCrossReach}}, {{xl, hi}, true},    {{kRoadStart, hi}}};
  } else {
    c = {{{kRoadStart, lo}}, {{xl, lo}, true},   {{xl, -kCrossReach}}, {{xr, -kCrossReach}},
         {{xr, lo}, true},   {{kRoadEnd, lo}},   {{kRoadEnd, hi}},     {{xr, hi}, true},
         {{xr, kCrossReach}}, {{xl, kCrossReach}}, {{xl, hi}, true},    {{kRoadStart, hi}}};
  }
  return filleted_polygon(c, kCurbRadius);
}

void build_turn(Layout& l, bool left, double xc) {
  const double w = l.lane_width;
  RouteBuilder rb;
  if (left) {
    const double r = 9.0;
    const double xs = xc + 0.5 * w - r;
    const double v_turn = std::min(l.cruise, std::sqrt(kLatAccel * r));
    rb.straight({kRoadStart, 0.0}, {xs, 0.0}, l.cruise);
    rb.arc({xs, r}, r, -0.5 * kPi, 0.0, v_turn);
    rb.straight({xs + r, r}, {xs + r, kCrossReach}, l.cruise);
  } else {
    const double r = 7.0;
    const double xs = xc - 0.5 * w - r;
    const double v_turn = std::min(l.cruise, std::sqrt(kLatAccel * r));
    rb.straight({kRoadStart, 0.0}, {xs, 0.0}, l.cruise);
    rb.arc({xs, -r}, r, 0.5 * kPi, 0.0, v_turn);
    rb.straight({xs + r, -r}, {xs + r, -kCrossReach}, l.cruise);
  }
  l.route = rb.take();
  l.command = left ? Command::left : Command::right;
}

Layout make_layout(Template kind, const GeneratorConfig& cfg, Rng& rng) {
  Layout l = base_layout(cfg, cfg.speed_cap);
  switch (kind) {
    case Template::straight_road:
    case Template::crosswalk: {
      RouteBuilder rb;
      rb.straight({kRoadStart, 0.0}, {kRoadEnd, 0.0}, l.cruise);
      l.route = rb.take();
      l.drivable = straight_polygon(l);
      l.command = Command::straight;
      if (kind == Template::crosswalk) {
        const double cw = rng.uniform(20.0, 36.0);
        l.crosswalk_x = cw;
        l.stop_x = cw - 2.5;
        const double u = rng.uniform();
        const bool red = u < 0.4;
        l.yield = !red && u < 0.7;
        l.must_stop = red || l.yield;
        l.stop_line = StopLine{{l.stop_x, -0.5 * cfg.lane_width}, {l.stop_x, 0.5 * cfg.lane_width}, red};
      }
      break;
    }
    case Template::left_turn:
    case Template::right_turn:
    case Template::t_junction: {
      const double xc = rng.uniform(16.0, 34.0);
      l.cross_x = xc;
      const bool tee = kind == Template::t_junction;
      const bool left = kind == Template::left_turn || (tee && rng.bernoulli(0.5));
      build_turn(l, left, xc);
      l.drivable = junction_polygon(l, xc, tee, cfg);
      break;
    }
  }
  return l;
}

struct ExpertRun {
  Trajectory traj;
  double max_speed = 0.0;
};

// Pure pursuit on the route with a jerk-limited speed profile that brakes
// ahead of curvature limits and stop positions.
ExpertRun simulate_expert(const Layout& l, double v0, double a0, const GeneratorConfig& cfg) {
  std::vector<Vec2> pts;
  pts.reserve(l.route.size());
  for (const auto& rp : l.route) pts.push_back(rp.p);
  const geom::Polyline route(pts);
  std::vector<double> arc(l.route.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) arc[i] = arc[i - 1] + (pts[i] - pts[i - 1]).norm();

  const double front = cfg.scorer.rear_axle_to_center + 0.5 * cfg.scorer.ego_length;
  const double s_stop = l.stop_x - front - kStopMargin - route.project({0.0, 0.0}).arc_length;
  double s_start = route.project({0.0, 0.0}).arc_length;

  double x = 0.0, y = 0.0, th = 0.0, v = v0, a = a0;
  bool stopped = false;
  ExpertRun run;
  run.max_speed = v0;
  const auto steps_per_wp = static_cast<std::size_t>(std::llround(kWaypointDt / kSimDt));
  for (std::size_t step = 1; step <= kWaypoints * steps_per_wp; ++step) {
    const double s = route.project({x, y}).arc_length;
    const Vec2 target = route.point_at(s + cfg.lookahead);
    const double alpha = wrap_angle(std::atan2(target.y - y, target.x - x) - th);
    const double kappa = 2.0 * std::sin(alpha) / cfg.lookahead;

    double v_des = l.cruise;
    const double horizon = v * v / (2.0 * kComfortDecel) + 10.0;
    for (std::size_t i = 0; i < l.route.size(); ++i) {
      if (arc[i] < s || arc[i] > s + horizon) continue;
      v_des = std::min(v_des, std::sqrt(l.route[i].v_limit * l.route[i].v_limit + 2.0 * kComfortDecel * (arc[i] - s)));
    }
    if (l.must_stop) {
      const double d = s_stop - (s - s_start);
      v_des = std::min(v_des, std::sqrt(2.0 * kComfortDecel * std::max(d, 0.0)));
      if (d < 0.1 && v < 0.3) stopped = true;
    }
    if (stopped) {
      v = 0.0;
      a = 0.0;
    } else {
      const double a_cmd = std::clamp((v_des - v) / 0.5, -kMaxBrake, kMaxAccel);
      a += std::clamp(a_cmd - a, -kMaxJerk * kSimDt, kMaxJerk * kSimDt);
      v += a * kSimDt;
      if (v <= 0.0) {
        v = 0.0;
        a = 0.0;
      }
    }
    const double th_mid = th + 0.5 * v * kappa * kSimDt;
    x += v * std::cos(th_mid) * kSimDt;
    y += v * std::sin(th_mid) * kSimDt;
    th = wrap_angle(th + v * kappa * kSimDt);
    run.max_speed = std::max(run.max_speed, v);
    if (step % steps_per_wp == 0) run.traj.points[step / steps_per_wp - 1] = Pose{x, y, th};
  }
  return run;
}

enum class AgentKind { lead, oncoming, follower, parked, sidewalk, crossing, cross_traffic };

AgentState vehicle(Rng& rng, double x, double y, double heading, double speed) {
  AgentState a;
  a.x = x;
  a.y = y;
  a.length = rng.uniform(4.2, 5.0);
  a.width = rng.uniform(1.8, 2.0);
  a.heading = heading;
  a.vx = speed * std::cos(heading);
  a.vy = speed * std::sin(heading);
  return a;
}

AgentState pedestrian(Rng& rng, double x, double y, double heading, double speed) {
  AgentState a;
  a.x = x;
  a.y = y;
  a.length = rng.uniform(0.5, 0.8);
  a.width = rng.uniform(0.5, 0.8);
  a.heading = heading;
  a.vx = speed * std::cos(heading);
  a.vy = speed * std::sin(heading);
  return a;
}

AgentState sample_agent(AgentKind kind, const Layout& l, double ego_v0, double expert_vmax, Rng& rng) {
  const double w = l.lane_width;
  switch (kind) {
    case AgentKind::lead:
      return vehicle(rng, rng.uniform(12.0, kPlacementBound), rng.uniform(-0.2, 0.2), 0.0,
                     rng.uniform(expert_vmax + 0.5, expert_vmax + 4.0));
    case AgentKind::oncoming:
      return vehicle(rng, rng.uniform(-kPlacementBound, kPlacementBound), w + rng.uniform(-0.2, 0.2), kPi,
                     rng.uniform(3.0, 10.0));
    case AgentKind::follower:
      return vehicle(rng, rng.uniform(-kPlacementBound, -10.0), rng.uniform(-0.2, 0.2), 0.0,
                     rng.uniform(0.0, std::max(0.5, ego_v0 - 1.0)));
    case AgentKind::parked: {
      const bool right_side = rng.bernoulli(0.5);
      auto a = vehicle(rng, rng.uniform(-kPlacementBound, kPlacementBound), 0.0, 0.0, 0.0);
      a.y = right_side ? l.road_lo - 0.3 - 0.5 * a.width : l.road_hi + 0.3 + 0.5 * a.width;
      return a;
    }
    case AgentKind::sidewalk: {
      const bool right_side = rng.bernoulli(0.5);
      const double y = right_side ? l.road_lo - rng.uniform(0.8, 3.0) : l.road_hi + rng.uniform(0.8, 3.0);
      return pedestrian(rng, rng.uniform(-kPlacementBound, kPlacementBound), y, rng.bernoulli(0.5) ? 0.0 : kPi,
                        rng.uniform(0.5, 1.5));
    }
    case AgentKind::crossing: {
      const double x = l.crosswalk_x.value_or(20.0) + rng.uniform(-1.0, 1.0);
      const bool up = rng.bernoulli(0.5);
      return pedestrian(rng, x, rng.uniform(l.road_lo - 1.0, l.road_hi + 1.0), up ? 0.5 * kPi : -0.5 * kPi,
                        rng.uniform(0.8, 1.5));
    }
    case AgentKind::cross_traffic: {
      const double xc = l.cross_x.value_or(25.0);
      const bool north = rng.bernoulli(0.5);
      const double x = north ? xc + 0.5 * w : xc - 0.5 * w;
      return vehicle(rng, x + rng.uniform(-0.2, 0.2), rng.uniform(-kPlacementBound, kPlacementBound),
                     north ? 0.5 * kPi : -0.5 * kPi, rng.uniform(0.0, 10.0));
    }
  }
  throw std::logic_error("unhandled agent kind");
}

std::vector<AgentKind> agent_menu(Template kind, const Layout& l) {
  switch (kind) {
    case Template::straight_road:
      return {AgentKind::lead, AgentKind::oncoming, AgentKind::follower, AgentKind::parked, AgentKind::sidewalk};
    case Template::crosswalk:
      if (l.must_stop) {
        return {AgentKind::crossing, AgentKind::oncoming, AgentKind::follower, AgentKind::parked,
                AgentKind::sidewalk};
      }
      return {AgentKind::lead, AgentKind::oncoming, AgentKind::follower, AgentKind::parked, AgentKind::sidewalk};
    default:
      return {AgentKind::oncoming, AgentKind::follower, AgentKind::parked, AgentKind::sidewalk,
              AgentKind::cross_traffic};
  }
}

bool safe_for_expert(const AgentState& agent, const std::vector<pdm::RolloutState>& states,
                     const pdm::ScorerConfig& sc) {
  const auto ttc_steps = static_cast<std::size_t>(std::llround(sc.ttc_horizon / sc.dt));
  for (const auto& st : states) {
    const auto box = pdm::ego_footprint(st.pose, sc);
    if (geom::boxes_overlap(box, agent.box_at(st.time))) return false;
    const Vec2 dir = geom::unit(st.pose.heading) * st.speed;
    for (std::size_t k = 1; k <= ttc_steps; ++k) {
      const double tau = sc.dt * double(k);
      auto projected = box;
      projected.center = box.center + dir * tau;
      if (geom::boxes_overlap(projected, agent.box_at(st.time + tau))) return false;
    }
  }
  return true;
}

bool placement_ok(const AgentState& a, AgentKind kind, const Scenario& sc, const geom::Polygon& drivable,
                  const pdm::ScorerConfig& scorer) {
  if (std::fabs(a.x) > kPlacementBound || std::fabs(a.y) > kPlacementBound) return false;
  const auto box = a.box_at(0.0);
  if (geom::box_separation(box, pdm::ego_footprint(sc.ego.pose, scorer)) < 0.5) return false;
  for (const auto& other : sc.agents)
    if (geom::box_separation(box, other.box_at(0.0)) < 0.3) return false;
  if (kind == AgentKind::parked) {
    for (const auto& c : box.corners())
      if (drivable.contains(c)) return false;
  }
  if (kind == AgentKind::sidewalk && drivable.contains({a.x, a.y})) return false;
  return true;
}

bool expert_valid(const pdm::Subscores& s) {
  return s.nc == 1.0 && s.dac == 1.0 && s.ep == 1.0 && s.ttc == 1.0 && s.c == 1.0 && s.tlc == 1.0;
}

std::optional<Scenario> try_generate(std::uint64_t seed, Template kind, const GeneratorConfig& cfg, Rng& rng) {
  Layout l = make_layout(kind, cfg, rng);

  double v0_max = rng.uniform(6.0, l.cruise);
  if (l.must_stop) {
    const double front = cfg.scorer.rear_axle_to_center + 0.5 * cfg.scorer.ego_length;
    const double room = l.stop_x - front - kStopMargin - 3.0;
    v0_max = std::min(v0_max, std::sqrt(2.0 * kComfortDecel * std::max(room, 1.0)));
  }
  const double v0 = rng.uniform(std::min(3.0, v0_max), v0_max);
  const double a0 = rng.uniform(-0.5, 0.5);

  Scenario sc;
  sc.id = "scn-" + std::to_string(seed);
  sc.kind = kind;
  sc.seed = seed;
  sc.command = l.command;
  sc.ego = EgoState{Pose{0.0, 0.0, 0.0}, v0, a0};
  sc.drivable = l.drivable;
  for (const auto& rp : l.route) sc.route.push_back(rp.p);
  sc.stop_line = l.stop_line;
  for (std::size_t i = 0; i < kHistoryPoses; ++i) {
    const double t = -kWaypointDt * double(kHistoryPoses - 1 - i);
    sc.history[i] = Pose{v0 * t + 0.5 * a0 * t * t, 0.0, 0.0};
  }
  const auto expert = simulate_expert(l, v0, a0, cfg);
  sc.expert = expert.traj;

  const auto states = pdm::rollout(sc.expert, sc.ego, cfg.scorer);
  if (!expert_valid(pdm::subscores(states, sc, cfg.scorer))) return std::nullopt;

  const geom::Polygon drivable(sc.drivable);
  const auto menu = agent_menu(kind, l);
  const auto n_agents = static_cast<std::size_t>(rng.integer(l.yield ? 1 : 0, std::int64_t(cfg.max_agents)));
  for (std::size_t i = 0; i < n_agents; ++i) {
    // A yielding expert needs someone on the crosswalk.
    const bool force_crossing = l.yield && i == 0;
    bool placed = false;
    for (std::size_t attempt = 0; attempt < cfg.placement_attempts && !placed; ++attempt) {
      const AgentKind k =
          force_crossing ? AgentKind::crossing : menu[static_cast<std::size_t>(rng.integer(0, std::int64_t(menu.size()) - 1))];
      auto a = sample_agent(k, l, v0, expert.max_speed, rng);
      if (!placement_ok(a, k, sc, drivable, cfg.scorer) || !safe_for_expert(a, states, cfg.scorer)) continue;
      sc.agents.push_back(a);
      placed = true;
    }
    if (!placed) return std::nullopt;
  }
  if (!expert_valid(pdm::subscores(states, sc, cfg.scorer))) return std::nullopt;

  const auto fine = rasterize_bev(sc, cfg.bev_cell, cfg.bev_extent);
  sc.lidar = pool(fine, cfg.lidar_rows, cfg.lidar_cols);
  Rng image_rng = rng.fork(0x1a9e);
  sc.image = render_image(sc, cfg.image_rows, cfg.image_cols, cfg.image_noise, image_rng);
  return sc;
}

}  // namespace

Template pick_template(std::uint64_t seed, const GeneratorConfig& cfg) {
  double total = 0.0;
  for (double w : cfg.template_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("template weights must be finite and >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("template weights sum to zero");
  Rng rng = Rng(seed).fork(0x7e3);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < kAllTemplates.size(); ++i) {
    if (u < cfg.template_weights[i]) return kAllTemplates[i];
    u -= cfg.template_weights[i];
  }
  for (std::size_t i = kAllTemplates.size(); i-- > 0;)
    if (cfg.template_weights[i] > 0.0) return kAllTemplates[i];
  return kAllTemplates.back();
}

Scenario generate(std::uint64_t seed, Template kind, const GeneratorConfig& cfg) {
  if (cfg.max_agents > 64) throw std::invalid_argument("max_agents above 64");
  for (std::size_t attempt = 0; attempt <= cfg.max_regenerations; ++attempt) {
    Rng rng = Rng(seed).fork(attempt);
    if (auto sc = try_generate(seed, kind, cfg, rng)) {
      if (cfg.unknown_command_rate > 0.0 && Rng(seed).fork(0xc0d).bernoulli(cfg.unknown_command_rate)) {
        sc->command = Command::unknown;
      }
      return *sc;
    }
  }
  throw std::runtime_error("scenario generation failed for seed " + std::to_string(seed) + " (" +
                           std::string(to_string(kind)) + ") after " + std::to_string(cfg.max_regenerations + 1) +
                           " attempts");
}

Scenario generate(std::uint64_t seed, const GeneratorConfig& cfg) { return generate(seed, pick_template(seed, cfg), cfg); }

namespace {

// Red stop lines show up in the occupancy channel as a 1 m deep static barrier.
std::optional<geom::OrientedBox> red_barrier(const Scenario& sc) {
  if (!sc.stop_line || !sc.stop_line->red) return std::nullopt;
  const auto d = sc.stop_line->b - sc.stop_line->a;
  return geom::OrientedBox{(sc.stop_line->a + sc.stop_line->b) * 0.5, 1.0, d.norm(), std::atan2(d.y, d.x) - 0.5 * kPi};
}

}  // namespace

Grid rasterize_bev(const Scenario& sc, double cell, double extent) {
  if (!(cell > 0.0) || !(extent > cell)) throw std::invalid_argument("raster: bad cell size or extent");
  const auto n = static_cast<std::size_t>(std::llround(extent / cell));
  const double half = 0.5 * extent;
  Grid g{n, n, kRawChannels, std::vector<float>(n * n * kRawChannels, 0.0f)};
  auto at = [&](std::size_t r, std::size_t c, std::size_t ch) -> float& { return g.values[(r * n + c) * kRawChannels + ch]; };
  const geom::Polygon drivable(sc.drivable);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const Vec2 center{half - (double(r) + 0.5) * cell, half - (double(c) + 0.5) * cell};
      at(r, c, road) = drivable.contains(center) ? 1.0f : 0.0f;
    }
  }
  auto index = [&](double v) {
    return static_cast<std::ptrdiff_t>(std::floor((half - v) / cell));
  };
  std::vector<std::pair<geom::OrientedBox, Vec2>> boxes;
  for (const auto& agent : sc.agents) boxes.push_back({agent.box_at(0.0), {agent.vx, agent.vy}});
  if (auto barrier = red_barrier(sc)) boxes.push_back({*barrier, {0.0, 0.0}});
  for (const auto& [box, vel] : boxes) {
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& p : box.corners()) {
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.y);
      ymax = std::max(ymax, p.y);
    }
    const auto clampi = [&](std::ptrdiff_t i) { return std::clamp<std::ptrdiff_t>(i, 0, std::ptrdiff_t(n) - 1); };
    const auto r0 = clampi(index(xmax)), r1 = clampi(index(xmin));
    const auto c0 = clampi(index(ymax)), c1 = clampi(index(ymin));
    for (auto r = r0; r <= r1; ++r) {
      for (auto c = c0; c <= c1; ++c) {
        const geom::OrientedBox cb{{half - (double(r) + 0.5) * cell, half - (double(c) + 0.5) * cell}, cell, cell, 0.0};
        if (!geom::boxes_overlap(cb, box)) continue;
        at(std::size_t(r), std::size_t(c), occupancy) = 1.0f;
        at(std::size_t(r), std::size_t(c), velocity_x) = static_cast<float>(vel.x);
        at(std::size_t(r), std::size_t(c), velocity_y) = static_cast<float>(vel.y);
      }
    }
  }
  return g;
}

Grid pool(const Grid& fine, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0 || fine.height % rows != 0 || fine.width % cols != 0) {
    throw std::invalid_argument("pool: " + std::to_string(fine.height) + "x" + std::to_string(fine.width) +
                                " raster is not divisible into " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  const std::size_t bh = fine.height / rows, bw = fine.width / cols, ch = fine.channels;
  Grid g{rows, cols, ch, std::vector<float>(rows * cols * ch, 0.0f)};
  const double inv = 1.0 / double(bh * bw);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      for (std::size_t k = 0; k < ch; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < bh; ++i)
          for (std::size_t j = 0; j < bw; ++j) s += fine.at(r * bh + i, c * bw + j, k);
        g.values[(r * cols + c) * ch + k] = static_cast<float>(s * inv);
      }
    }
  }
  return g;
}

Grid render_image(const Scenario& sc, std::size_t rows, std::size_t cols, double noise, Rng& rng) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("image grid needs positive size");
  // Range band edges grow with distance.
  std::vector<double> edges(rows + 1);
  for (std::size_t i = 0; i <= rows; ++i) edges[i] = 40.0 * std::pow(double(i) / double(rows), 1.5);
  const double fov = kPi / 3.0;  // half-angle
  const geom::Polygon drivable(sc.drivable);
  const auto barrier = red_barrier(sc);
  constexpr int kSub = 4;
  Grid g{rows, cols, kRawChannels, std::vector<float>(rows * cols * kRawChannels, 0.0f)};
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      double occ = 0.0, vx = 0.0, vy = 0.0, road_hits = 0.0;
      for (int i = 0; i < kSub; ++i) {
        for (int j = 0; j < kSub; ++j) {
          const double range = edges[r] + (edges[r + 1] - edges[r]) * (i + 0.5) / kSub;
          const double az = fov - 2.0 * fov * (double(c) + (j + 0.5) / kSub) / double(cols);
          const Vec2 p{range * std::cos(az), range * std::sin(az)};
          bool hit = false;
          for (const auto& a : sc.agents) {
            if (a.box_at(0.0).contains(p)) {
              occ += 1.0;
              vx += a.vx;
              vy += a.vy;
              hit = true;
              break;
            }
          }
          if (!hit && barrier && barrier->contains(p)) occ += 1.0;
          if (drivable.contains(p)) road_hits += 1.0;
        }
      }
      const double n = kSub * kSub;
      float* cell = &g.values[(r * cols + c) * kRawChannels];
      cell[occupancy] = static_cast<float>(occ / n);
      cell[velocity_x] = static_cast<float>(occ > 0 ? vx / occ : 0.0);
      cell[velocity_y] = static_cast<float>(occ > 0 ? vy / occ : 0.0);
      cell[road] = static_cast<float>(road_hits / n);
    }
  }
  if (noise > 0.0)
    for (auto& v : g.values) v += static_cast<float>(rng.normal(0.0, noise));
  return g;
}

}  // namespace pie::world
