#include "pie/pdm.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_interp.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace pie::pdm {

namespace {

// Displacements below this (per step) leave the heading unchanged.
constexpr double kStillStep = 0.01;  // m per sample; below this the heading is held

struct InterpDeleter {
  void operator()(gsl_interp* p) const { gsl_interp_free(p); }
};

std::vector<double> spline_samples(const std::vector<double>& t, const std::vector<double>& v,
                                   const std::vector<double>& at) {
  std::unique_ptr<gsl_interp, InterpDeleter> interp(gsl_interp_alloc(gsl_interp_cspline, t.size()));
  if (!interp || gsl_interp_init(interp.get(), t.data(), v.data(), t.size()) != GSL_SUCCESS) {
    throw std::runtime_error("rollout: spline construction failed");
  }
  std::vector<double> out(at.size());
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double ti = std::clamp(at[i], t.front(), t.back());
    out[i] = gsl_interp_eval(interp.get(), t.data(), v.data(), ti, nullptr);
  }
  return out;
}

bool comfortable(std::span<const double> accel, std::span<const double> jerk, const ScorerConfig& cfg) {
  for (double a : accel)
    if (!(std::fabs(a) <= cfg.max_lon_accel)) return false;
  for (double j : jerk)
    if (!(std::fabs(j) <= cfg.max_jerk)) return false;
  return true;
}

bool collides(const geom::OrientedBox& ego, const world::Scenario& sc, double t) {
  for (const auto& agent : sc.agents)
    if (geom::boxes_overlap(ego, agent.box_at(t))) return true;
  return false;
}

}  // namespace

geom::OrientedBox ego_footprint(const Pose& pose, const ScorerConfig& cfg) {
  const geom::Vec2 c = geom::Vec2{pose.x, pose.y} + geom::unit(pose.heading) * cfg.rear_axle_to_center;
  return {c, cfg.ego_length, cfg.ego_width, pose.heading};
}

std::vector<RolloutState> rollout(const Trajectory& traj, const world::EgoState& ego, const ScorerConfig& cfg) {
  static const bool handler_off = [] {
    gsl_set_error_handler_off();
    return true;
  }();
  (void)handler_off;
  if (!(cfg.dt > 0.0)) throw std::invalid_argument("rollout: dt must be positive");

  std::vector<double> kt{0.0}, kx{ego.pose.x}, ky{ego.pose.y};
  for (std::size_t i = 0; i < kWaypoints; ++i) {
    kt.push_back(kWaypointDt * double(i + 1));
    kx.push_back(traj.points[i].x);
    ky.push_back(traj.points[i].y);
  }
  const auto steps = static_cast<std::size_t>(std::llround(kHorizon / cfg.dt));
  std::vector<double> times(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) times[i] = cfg.dt * double(i);
  const auto xs = spline_samples(kt, kx, times);
  const auto ys = spline_samples(kt, ky, times);

  std::vector<RolloutState> out(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) {
    auto& s = out[i];
    s.time = times[i];
    s.pose = {xs[i], ys[i], ego.pose.heading};
    if (i == 0) continue;
    const double dx = xs[i] - xs[i - 1], dy = ys[i] - ys[i - 1];
    const double step = std::hypot(dx, dy);
    const double prev = out[i - 1].pose.heading;
    // Motion against the current heading is reversing: heading kept, speed negative.
    const bool reverse = dx * std::cos(prev) + dy * std::sin(prev) < 0.0;
    s.pose.heading = step > kStillStep ? (reverse ? std::atan2(-dy, -dx) : std::atan2(dy, dx)) : prev;
    s.speed = (reverse ? -step : step) / cfg.dt;
  }
  if (steps >= 1) out[0].speed = out[1].speed;
  for (std::size_t i = 1; i <= steps; ++i) out[i].accel = (out[i].speed - out[i - 1].speed) / cfg.dt;
  if (steps >= 1) out[0].accel = out[1].accel;
  for (std::size_t i = 2; i <= steps; ++i) out[i].jerk = (out[i].accel - out[i - 1].accel) / cfg.dt;
  if (steps >= 2) out[0].jerk = out[1].jerk = out[2].jerk;
  return out;
}

double route_progress(const std::vector<RolloutState>& states, const geom::Polyline& route) {
  if (states.empty()) return 0.0;
  const auto& a = states.front().pose;
  const auto& b = states.back().pose;
  return route.project({b.x, b.y}).arc_length - route.project({a.x, a.y}).arc_length;
}

double history_comfort(const world::Scenario& sc, const ScorerConfig& cfg) {
  std::vector<double> speed, accel, jerk;
  for (std::size_t i = 1; i < sc.history.size(); ++i) {
    const auto& p = sc.history[i - 1];
    const auto& q = sc.history[i];
    speed.push_back(std::hypot(q.x - p.x, q.y - p.y) / kWaypointDt);
  }
  for (std::size_t i = 1; i < speed.size(); ++i) accel.push_back((speed[i] - speed[i - 1]) / kWaypointDt);
  for (std::size_t i = 1; i < accel.size(); ++i) jerk.push_back((accel[i] - accel[i - 1]) / kWaypointDt);
  return comfortable(accel, jerk, cfg) ? 1.0 : 0.0;
}

Subscores subscores(const std::vector<RolloutState>& states, const world::Scenario& sc, const ScorerConfig& cfg) {
  const geom::Polygon drivable(sc.drivable);
  const geom::Polyline route(sc.route);
  Subscores s;

  const auto ttc_steps = static_cast<std::size_t>(std::llround(cfg.ttc_horizon / cfg.dt));
  std::vector<double> accel, jerk;
  double s0 = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto& st = states[i];
    const auto box = ego_footprint(st.pose, cfg);
    if (s.nc > 0.0 && collides(box, sc, st.time)) s.nc = 0.0;
    if (s.dac > 0.0) {
      for (const auto& c : box.corners()) {
        if (!drivable.contains(c)) {
          s.dac = 0.0;
          break;
        }
      }
    }
    if (s.ttc > 0.0) {
      const geom::Vec2 dir = geom::unit(st.pose.heading) * st.speed;
      for (std::size_t k = 1; k <= ttc_steps; ++k) {
        const double tau = cfg.dt * double(k);
        auto projected = box;
        projected.center = box.center + dir * tau;
        if (collides(projected, sc, st.time + tau)) {
          s.ttc = 0.0;
          break;
        }
      }
    }
    const auto proj = route.project({st.pose.x, st.pose.y});
    if (i == 0) s0 = proj.arc_length;
    if (std::fabs(proj.lateral) > cfg.lk_max_offset) s.lk = 0.0;
    if (proj.arc_length - s0 < cfg.ddc_min_progress) s.ddc = 0.0;
    if (sc.stop_line && sc.stop_line->red && geom::segment_intersects_box(sc.stop_line->a, sc.stop_line->b, box)) {
      s.tlc = 0.0;
    }
    accel.push_back(st.accel);
    jerk.push_back(st.jerk);
    if (i > 0 && std::fabs(st.accel - states[i - 1].accel) > cfg.ec_max_accel_change) s.ec = 0.0;
  }
  s.c = comfortable(accel, jerk, cfg) ? 1.0 : 0.0;
  s.hc = history_comfort(sc, cfg);

  const double expert = route_progress(rollout(sc.expert, sc.ego, cfg), route);
  if (expert < cfg.ep_min_expert_progress) {
    s.ep = 1.0;
  } else {
    s.ep = std::clamp(route_progress(states, route) / expert, 0.0, 1.0);
  }
  return s;
}

Subscores score_trajectory(const Trajectory& traj, const world::Scenario& sc, const ScorerConfig& cfg) {
  return subscores(rollout(traj, sc.ego, cfg), sc, cfg);
}

double pdms(const Subscores& s) { return ((5.0 * s.ep + 5.0 * s.ttc + 2.0 * s.c) / 12.0) * s.nc * s.dac; }

double epdms(const Subscores& s) {
  return ((5.0 * s.ep + 5.0 * s.ttc + 2.0 * s.hc + 2.0 * s.lk + 2.0 * s.ec) / 16.0) * s.nc * s.dac * s.ddc *
         s.tlc;
}

ScoreRecord make_record(std::string id, const Subscores& s) { return {std::move(id), s, pdms(s), epdms(s)}; }

Aggregate aggregate(std::span<const ScoreRecord> records) {
  if (records.empty()) throw std::invalid_argument("aggregate: no score records");
  Aggregate a;
  a.count = records.size();
  Subscores sum{0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  for (const auto& r : records) {
    a.mean_pdms += r.pdms;
    a.mean_epdms += r.epdms;
    sum.nc += r.sub.nc;
    sum.dac += r.sub.dac;
    sum.ep += r.sub.ep;
    sum.ttc += r.sub.ttc;
    sum.c += r.sub.c;
    sum.hc += r.sub.hc;
    sum.lk += r.sub.lk;
    sum.ec += r.sub.ec;
    sum.ddc += r.sub.ddc;
    sum.tlc += r.sub.tlc;
  }
  const double n = double(a.count);
  a.mean_pdms /= n;
  a.mean_epdms /= n;
  a.mean_sub = {sum.nc / n, sum.dac / n, sum.ep / n, sum.ttc / n, sum.c / n,
                sum.hc / n, sum.lk / n,  sum.ec / n, sum.ddc / n, sum.tlc / n};
  a.pdms_of_means = pdms(a.mean_sub);
  a.epdms_of_means = epdms(a.mean_sub);
  return a;
}

Trajectory constant_velocity_plan(const world::EgoState& ego) {
  Trajectory t;
  for (std::size_t k = 0; k < kWaypoints; ++k) {
    const double d = ego.speed * kWaypointDt * double(k + 1);
    t.points[k] = {ego.pose.x + d * std::cos(ego.pose.heading), ego.pose.y + d * std::sin(ego.pose.heading),
                   ego.pose.heading};
  }
  return t;
}

}  // namespace pie::pdm
