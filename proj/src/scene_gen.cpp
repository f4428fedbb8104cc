#include "caad/scene_gen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "caad/rng.hpp"

namespace caad {

namespace {

// Scripts run on a fine 0.1 s grid covering t in [-1.5, 4.0]. Coarse poses
// (history + future) are sampled every fifth tick.
constexpr int kFine = 56;
constexpr double kFineDt = 0.1;
constexpr int kCurrentFine = 15;  // t = 0

struct Track {
  std::array<Vec2, kFine> pos;
  std::array<double, kFine> heading;
};

Vec2 heading_dir(double h) { return {std::cos(h), std::sin(h)}; }

// Position and tangent at arc length s along a polyline, extrapolating past
// either end.
void sample_path(const Polyline& path, double s, Vec2& pos, double& heading) {
  double walked = 0.0;
  for (std::size_t i = 1; i < path.pts.size(); ++i) {
    const Vec2 a = path.pts[i - 1];
    const Vec2 b = path.pts[i];
    const double len = geo::dist(a, b);
    if (s <= walked + len || i + 1 == path.pts.size()) {
      const Vec2 d = (b - a) * (1.0 / len);
      pos = a + d * (s - walked);
      heading = std::atan2(d.y, d.x);
      return;
    }
    walked += len;
  }
  pos = path.pts.front();
  heading = 0.0;
}

Track track_along_path(const Polyline& path, double s0, const std::array<double, kFine>& speed) {
  Track t;
  double s = s0;
  for (int i = 0; i < kFine; ++i) {
    sample_path(path, s, t.pos[static_cast<std::size_t>(i)], t.heading[static_cast<std::size_t>(i)]);
    if (i + 1 < kFine)
      s += 0.5 * (speed[static_cast<std::size_t>(i)] + speed[static_cast<std::size_t>(i + 1)]) * kFineDt;
  }
  return t;
}

std::array<double, kFine> const_speed(double v) {
  std::array<double, kFine> s;
  s.fill(v);
  return s;
}

// Speed profile decelerating at `decel` from time t_start, floored at v_floor.
std::array<double, kFine> decel_speed(double v0, double decel, double t_start, double v_floor) {
  std::array<double, kFine> s;
  for (int i = 0; i < kFine; ++i) {
    const double t = -1.5 + kFineDt * i;
    s[static_cast<std::size_t>(i)] = std::max(v_floor, v0 - decel * std::max(0.0, t - t_start));
  }
  return s;
}

// Yield-then-go: decelerate from t_start, hold the floor, then pick the speed
// back up at accel from t_resume, capped at v0.
std::array<double, kFine> yield_resume_speed(double v0, double decel, double t_start,
                                             double v_floor, double t_resume, double accel) {
  std::array<double, kFine> s = decel_speed(v0, decel, t_start, v_floor);
  for (int i = 0; i < kFine; ++i) {
    const double t = -1.5 + kFineDt * i;
    if (t > t_resume)
      s[static_cast<std::size_t>(i)] =
          std::min(v0, std::max(s[static_cast<std::size_t>(i)], v_floor + accel * (t - t_resume)));
  }
  return s;
}

double arc_at(const std::array<double, kFine>& speed, double s0, int tick) {
  double s = s0;
  for (int i = 0; i < tick; ++i)
    s += 0.5 * (speed[static_cast<std::size_t>(i)] + speed[static_cast<std::size_t>(i + 1)]) * kFineDt;
  return s;
}

// Gap-keeping speed profile for the ego: cruise at v0 until t_react, then
// regulate towards a safe speed behind a leader given by its arc position on
// the ego path per fine tick.
std::array<double, kFine> follow_speed(double v0, double t_react,
                                       const std::array<double, kFine>& leader_arc, double min_gap,
                                       double gap_time, double decel_cap, double accel_cap) {
  std::array<double, kFine> v;
  double cur = v0;
  double arc = -1.5 * v0;  // ego cruises through history
  for (int i = 0; i < kFine; ++i) {
    v[static_cast<std::size_t>(i)] = cur;
    const double t = -1.5 + kFineDt * i;
    double a = 0.0;
    if (t >= t_react) {
      const double gap = leader_arc[static_cast<std::size_t>(i)] - arc;
      const double v_safe = std::clamp((gap - min_gap) / gap_time, 0.0, v0);
      a = std::clamp((v_safe - cur) / 0.4, -decel_cap, accel_cap);
    }
    const double nxt = std::max(0.0, cur + a * kFineDt);
    arc += 0.5 * (cur + nxt) * kFineDt;
    cur = nxt;
  }
  return v;
}

// Constant-deceleration stop from the reaction time, chosen to stop by
// `stop_arc` (arc measured like follow_speed, ego at arc 0 at t = 0).
std::array<double, kFine> stop_speed(double v0, double t_react, double stop_arc, double decel_cap) {
  const double react_travel = v0 * (t_react - 0.0);
  const double avail = std::max(0.8, stop_arc - react_travel);
  const double a = std::min(decel_cap, v0 * v0 / (2.0 * avail));
  return decel_speed(v0, a, t_react, 0.0);
}

AgentState realize(const Track& track, int id, const Footprint& fp) {
  AgentState a;
  a.id = id;
  a.footprint = fp;
  for (int k = 0; k < kHistorySteps; ++k) {
    const int i = k * 5;
    a.history.push_back({track.pos[static_cast<std::size_t>(i)].x, track.pos[static_cast<std::size_t>(i)].y,
                         geo::wrap_angle(track.heading[static_cast<std::size_t>(i)])});
  }
  for (int k = 1; k <= kFutureSteps; ++k) {
    const int i = kCurrentFine + k * 5;
    a.gt_future.push_back({track.pos[static_cast<std::size_t>(i)].x, track.pos[static_cast<std::size_t>(i)].y,
                           geo::wrap_angle(track.heading[static_cast<std::size_t>(i)])});
  }
  a.gt_valid.assign(kFutureSteps, true);
  return a;
}

Pose2 track_pose(const Track& t, int i) {
  return {t.pos[static_cast<std::size_t>(i)].x, t.pos[static_cast<std::size_t>(i)].y,
          t.heading[static_cast<std::size_t>(i)]};
}

bool tracks_conflict(const Track& a, const Footprint& fa, const Track& b, const Footprint& fb,
                     double inflate) {
  Footprint ia{fa.length + inflate, fa.width + inflate};
  Footprint ib{fb.length + inflate, fb.width + inflate};
  for (int i = 0; i < kFine; ++i)
    if (geo::rect_overlap(track_pose(a, i), ia, track_pose(b, i), ib)) return true;
  return false;
}

Footprint sample_footprint(Rng& rng) {
  return {rng.uniform(4.2, 4.8), rng.uniform(1.8, 2.0)};
}

Polyline straight_line(Vec2 a, Vec2 b) { return Polyline{{a, b}}; }

DrivablePolygon band_polygon(double x0, double x1, double y_lo, double y_hi) {
  return DrivablePolygon{{{x0, y_lo}, {x1, y_lo}, {x1, y_hi}, {x0, y_hi}}};
}

// Everything a template builds before fillers are added.
struct Draft {
  Scene scene;
  std::vector<Track> tracks;          // scripted entities, index 0 = ego
  std::vector<Footprint> footprints;  // parallel to tracks
  Track ego_track;
  Footprint ego_fp;

  void add_scripted(const Track& t, const Footprint& fp, Scene& s, int id) {
    s.agents.push_back(realize(t, id, fp));
    tracks.push_back(t);
    footprints.push_back(fp);
  }
};

struct LaneSlot {
  Vec2 start;
  double heading;
  double speed;
};

// Add background agents on the given candidate slots until the target count
// is reached, keeping every accepted agent conflict-free against everything
// already placed.
void add_fillers(Draft& d, Scene& s, std::vector<LaneSlot> slots, int target_agents, Rng& rng) {
  std::size_t slot_i = 0;
  while (static_cast<int>(s.agents.size()) < target_agents && slot_i < slots.size()) {
    const LaneSlot& slot = slots[slot_i++];
    const Footprint fp = sample_footprint(rng);
    const Polyline path =
        straight_line(slot.start - heading_dir(slot.heading) * 20.0,
                      slot.start + heading_dir(slot.heading) * (slot.speed * 6.0 + 40.0));
    Track t = track_along_path(path, 20.0, const_speed(slot.speed));
    bool ok = !tracks_conflict(t, fp, d.ego_track, d.ego_fp, 0.8);
    for (std::size_t j = 0; ok && j < d.tracks.size(); ++j)
      ok = !tracks_conflict(t, fp, d.tracks[j], d.footprints[j], 0.5);
    if (!ok) continue;
    AgentState a = realize(t, static_cast<int>(s.agents.size()) + 1, fp);
    // occasional track loss near the horizon exercises validity masking
    if (rng.bernoulli(0.15)) {
      const int lost = 1 + rng.uniform_int(3);
      for (int k = kFutureSteps - lost; k < kFutureSteps; ++k) a.gt_valid[static_cast<std::size_t>(k)] = false;
    }
    s.agents.push_back(std::move(a));
    d.tracks.push_back(t);
    d.footprints.push_back(fp);
  }
}

Polyline route_from_track(const Track& ego) {
  Polyline r;
  for (int k = kCurrentFine; k < kFine; k += 5) {
    const Vec2 p = ego.pos[static_cast<std::size_t>(k)];
    if (r.pts.empty() || geo::dist(r.pts.back(), p) > 1e-6) r.pts.push_back(p);
  }
  if (r.pts.size() < 2) {
    const Vec2 p0 = ego.pos[kCurrentFine];
    r.pts = {p0, p0 + heading_dir(ego.heading[kCurrentFine]) * 2.0};
  }
  return r;
}

void finalize(Draft& d, Scene& s) {
  s.ego = realize(d.ego_track, 0, d.ego_fp);
  s.route = route_from_track(d.ego_track);
  // The expert future must be collision-free and on-road; template parameters
  // are chosen so these hold, and a violation means a template bug.
  for (std::size_t j = 0; j < d.tracks.size(); ++j)
    if (tracks_conflict(d.ego_track, d.ego_fp, d.tracks[j], d.footprints[j], 0.0))
      throw std::logic_error("generate_scene: expert future conflicts with agent track");
  for (int i = 0; i < kFine; ++i)
    if (!geo::point_in_polygon(d.ego_track.pos[static_cast<std::size_t>(i)], s.drivable))
      throw std::logic_error("generate_scene: expert future leaves the drivable area");
  validate_scene(s);
}

// ---- templates --------------------------------------------------------------

void build_free_flow(Draft& d, Scene& s, Rng& rng) {
  const double w = rng.uniform(3.0, 4.0);
  const double v = rng.uniform(5.0, 11.0);
  s.drivable = band_polygon(-40.0, 90.0, -1.5 * w, 1.5 * w);
  s.centerlines = {straight_line({-40.0, 0.0}, {90.0, 0.0}),
                   straight_line({-40.0, w}, {90.0, w}),
                   straight_line({90.0, -w}, {-40.0, -w})};
  d.ego_fp = sample_footprint(rng);
  d.ego_track = track_along_path(straight_line({-40.0, 0.0}, {90.0, 0.0}), 40.0 - 1.5 * v, const_speed(v));

  const int target = 2 + rng.uniform_int(9);
  // Fillers keep clear of the route corridor: ahead in the ego lane only when
  // pulling away, behind only when too slow to catch up before the horizon.
  std::vector<LaneSlot> slots;
  slots.push_back({{rng.uniform(28.0, 36.0), 0.0}, 0.0, std::min(12.0, v + rng.uniform(0.5, 1.5))});
  const double base_adj = rng.uniform(-20.0, -4.0);
  for (int i = 0; i < 4; ++i)
    slots.push_back({{base_adj + i * 18.0, w}, 0.0, rng.uniform(4.0, 11.0)});
  const double base_opp = rng.uniform(20.0, 34.0);
  for (int i = 0; i < 4; ++i)
    slots.push_back({{base_opp + i * 16.0, -w}, 3.14159265358979323846, rng.uniform(4.0, 11.0)});
  slots.push_back({{rng.uniform(-30.0, -24.0), 0.0}, 0.0, rng.uniform(3.0, 3.3)});
  add_fillers(d, s, slots, target, rng);
}

void build_lead_brake(Draft& d, Scene& s, Rng& rng) {
  const double w = rng.uniform(3.0, 4.0);
  const double v = rng.uniform(5.0, 11.0);
  s.drivable = band_polygon(-40.0, 90.0, -1.5 * w, 1.5 * w);
  s.centerlines = {straight_line({-40.0, 0.0}, {90.0, 0.0}),
                   straight_line({-40.0, w}, {90.0, w}),
                   straight_line({90.0, -w}, {-40.0, -w})};
  d.ego_fp = sample_footprint(rng);
  const Footprint lead_fp = sample_footprint(rng);
  const bool brakes = rng.bernoulli(0.5);

  const double gap0 = rng.uniform(12.0, 20.0);
  const double d0 = gap0 + 0.5 * (d.ego_fp.length + lead_fp.length);
  const Polyline lane = straight_line({-40.0, 0.0}, {90.0, 0.0});

  std::array<double, kFine> lead_speed =
      brakes ? decel_speed(v, 4.0, -0.5, 0.0) : const_speed(v);
  Track lead = track_along_path(lane, 40.0 - 1.5 * v + d0, lead_speed);
  d.add_scripted(lead, lead_fp, s, 1);

  std::array<double, kFine> ego_speed;
  if (brakes) {
    // leader arc in the frame where the ego sits at 0 at t = 0
    std::array<double, kFine> leader_arc;
    for (int i = 0; i < kFine; ++i)
      leader_arc[static_cast<std::size_t>(i)] = arc_at(lead_speed, d0 - 1.5 * v, i);
    double min_gap = 0.5 * (d.ego_fp.length + lead_fp.length) + 2.0;
    for (int attempt = 0; attempt < 5; ++attempt) {
      ego_speed = follow_speed(v, 0.5, leader_arc, min_gap, 1.0, 5.5 + attempt * 0.5, 0.0);
      Track probe = track_along_path(lane, 40.0 - 1.5 * v, ego_speed);
      if (!tracks_conflict(probe, d.ego_fp, lead, lead_fp, 0.4)) break;
      min_gap += 1.0;
    }
  } else {
    ego_speed = const_speed(v);
  }
  d.ego_track = track_along_path(lane, 40.0 - 1.5 * v, ego_speed);

  const int target = 2 + rng.uniform_int(9);
  std::vector<LaneSlot> slots;
  const double base_adj = rng.uniform(-20.0, -4.0);
  for (int i = 0; i < 4; ++i)
    slots.push_back({{base_adj + i * 18.0, w}, 0.0, rng.uniform(4.0, 11.0)});
  const double base_opp = rng.uniform(20.0, 34.0);
  for (int i = 0; i < 4; ++i)
    slots.push_back({{base_opp + i * 16.0, -w}, 3.14159265358979323846, rng.uniform(4.0, 11.0)});
  add_fillers(d, s, slots, target, rng);
}

void build_merge(Draft& d, Scene& s, Rng& rng) {
  const double w = rng.uniform(3.0, 4.0);
  const double v = rng.uniform(5.0, 11.0);
  const double theta = rng.uniform(0.32, 0.42);
  // timing first: the asserting agent reaches the merge point at t_assert and
  // a constant-speed ego would arrive time_gap later
  const double t_assert = rng.uniform(0.75, 1.05);
  const double time_gap = rng.uniform(0.6, 0.9) + 4.5 / v;  // slower scenes need more room
  const double x_merge = std::clamp(v * (t_assert + time_gap), 6.5, 16.0);
  d.ego_fp = sample_footprint(rng);
  const Footprint agent_fp = sample_footprint(rng);
  const bool yields = rng.bernoulli(0.5);

  const double ramp_len = 24.0;
  const Vec2 dir{std::cos(theta), std::sin(theta)};
  const Vec2 merge_pt{x_merge, 0.0};
  const Vec2 ramp_start = merge_pt - dir * ramp_len;
  const Vec2 ramp_ext = ramp_start - dir * 14.0;
  Polyline ramp_path{{ramp_ext, merge_pt, {x_merge + 46.0, 0.0}}};

  // drivable: main band plus the ramp corridor joining from below
  const double y_lo = -0.75 * w, y_hi = 1.5 * w;
  const Vec2 n{-dir.y, dir.x};
  auto edge_cross_x = [&](double side) {
    const Vec2 p0 = ramp_ext + n * (side * 0.5 * w);
    const double t = (y_lo - p0.y) / dir.y;
    return p0.x + t * dir.x;
  };
  const Vec2 corner_hi = ramp_ext + n * (0.5 * w);
  const Vec2 corner_lo = ramp_ext - n * (0.5 * w);
  const double xu = edge_cross_x(+1.0);  // upper edge hits the band bottom first
  const double xl = edge_cross_x(-1.0);
  s.drivable = DrivablePolygon{{{-40.0, y_lo},
                                {xu, y_lo},
                                corner_hi,
                                corner_lo,
                                {xl, y_lo},
                                {90.0, y_lo},
                                {90.0, y_hi},
                                {-40.0, y_hi}}};
  s.centerlines = {straight_line({-40.0, 0.0}, {90.0, 0.0}),
                   Polyline{{ramp_ext, merge_pt}},
                   straight_line({90.0, w}, {-40.0, w})};

  const Polyline lane = straight_line({-40.0, 0.0}, {90.0, 0.0});
  const double v_a = v * rng.uniform(0.85, 1.15);
  const double t_ego_merge = x_merge / v;

  if (yields) {
    // agent begins easing off at t = -1.0 (visible in its history) and slots
    // in behind the constant-speed ego
    const double t_arrive = t_ego_merge + rng.uniform(-0.1, 0.2);
    const double s_now = (ramp_len + 14.0) - v_a * t_arrive;  // arc at t = 0 assuming constant speed
    const double s0 = s_now - 1.5 * v_a;
    d.ego_track = track_along_path(lane, 40.0 - 1.5 * v, const_speed(v));
    // search over (extra start-back delay, deceleration) for a yield-then-go
    // profile that slots in cleanly behind the constant-speed ego while still
    // passing close enough to the ego path to stay interaction-relevant
    const double t_resume =
        t_ego_merge + (0.5 * d.ego_fp.length + 0.5 * agent_fp.length) / v + 0.3;
    const double pred_threshold = 0.5 * (d.ego_fp.width + agent_fp.width) + 0.25;
    // the constant-speed ego spatial path is the segment (0,0)-(18,0)
    auto predicate_distance = [&](const Track& t) {
      double best = 1e18;
      for (int i = kCurrentFine + 5; i < kFine; i += 5) {
        const Vec2 p = t.pos[static_cast<std::size_t>(i)];
        const double along = std::clamp(p.x, 0.0, 18.0);
        best = std::min(best, geo::dist(p, {along, 0.0}));
      }
      return best;
    };
    Track agent = track_along_path(ramp_path, s0 - 3.0 * v_a, decel_speed(v_a, 3.8, -1.0, 0.2 * v_a));
    double best_dist = 1e18;
    bool found = false;
    for (double delay = 0.0; delay <= 3.01 && !found; delay += 0.75) {
      const double s0d = s0 - delay * v_a;
      for (double a_y = 0.9; a_y <= 3.8 && !found; a_y += 0.35) {
        const auto sp = yield_resume_speed(v_a, a_y, -1.0, 0.3 * v_a, t_resume, 2.0);
        Track probe = track_along_path(ramp_path, s0d, sp);
        if (tracks_conflict(d.ego_track, d.ego_fp, probe, agent_fp, 0.3)) continue;
        const double dist = predicate_distance(probe);
        if (dist < best_dist) {
          best_dist = dist;
          agent = probe;
        }
        if (dist <= pred_threshold - 0.15) found = true;
      }
    }
    d.add_scripted(agent, agent_fp, s, 1);
  } else {
    // agent asserts: constant speed, arrives clearly ahead of the ego slot
    const double t_arrive = t_assert;
    const double s_now = (ramp_len + 14.0) - v_a * t_arrive;
    const double s0 = s_now - 1.5 * v_a;
    std::array<double, kFine> sp = const_speed(v_a);
    Track agent = track_along_path(ramp_path, s0, sp);
    d.add_scripted(agent, agent_fp, s, 1);

    // ego yields behind the merging agent, projected onto the ego lane
    std::array<double, kFine> leader_arc;
    for (int i = 0; i < kFine; ++i) {
      const double s_a = arc_at(sp, s0, i);
      leader_arc[static_cast<std::size_t>(i)] = x_merge - std::max(0.0, (ramp_len + 14.0) - s_a);
    }
    const double base_gap = 0.5 * (d.ego_fp.length + agent_fp.length) + 2.2;
    std::array<double, kFine> ego_speed = follow_speed(v, -0.4, leader_arc, base_gap + 3.0, 1.3, 7.0, 0.0);
    bool found = false;
    // escalate: react earlier, demand a larger gap, brake harder
    for (double react : {0.5, 0.2, 0.0, -0.4}) {
      for (int attempt = 0; attempt < 4 && !found; ++attempt) {
        const auto probe_speed =
            follow_speed(v, react, leader_arc, base_gap + attempt, 1.1, 5.5 + 0.5 * attempt, 0.0);
        Track probe = track_along_path(lane, 40.0 - 1.5 * v, probe_speed);
        if (!tracks_conflict(probe, d.ego_fp, agent, agent_fp, 0.4)) {
          ego_speed = probe_speed;
          found = true;
        }
      }
      if (found) break;
    }
    d.ego_track = track_along_path(lane, 40.0 - 1.5 * v, ego_speed);
  }

  const int target = 2 + rng.uniform_int(9);
  std::vector<LaneSlot> slots;
  const double base_opp = rng.uniform(24.0, 38.0);
  for (int i = 0; i < 5; ++i)
    slots.push_back({{base_opp + i * 15.0, w}, 3.14159265358979323846, rng.uniform(4.0, 10.0)});
  slots.push_back({{rng.uniform(30.0, 40.0), 0.0}, 0.0, std::min(12.0, v + rng.uniform(1.0, 2.0))});
  add_fillers(d, s, slots, target, rng);
}

void build_crossing(Draft& d, Scene& s, Rng& rng) {
  const double w = rng.uniform(3.0, 4.0);
  const double v = rng.uniform(4.0, 8.0);
  const double x_cross = std::clamp(v * rng.uniform(1.8, 2.6), 7.0, 16.0);
  const bool from_below = rng.bernoulli(0.5);
  const double v_c = rng.uniform(3.5, 8.0);
  d.ego_fp = sample_footprint(rng);
  const Footprint agent_fp = sample_footprint(rng);
  const bool yields = rng.bernoulli(0.5);

  const double hh = 1.5 * w;  // main band half height
  const double vw = w;        // vertical band half width
  s.drivable = DrivablePolygon{{{-40.0, -hh},
                                {x_cross - vw, -hh},
                                {x_cross - vw, -40.0},
                                {x_cross + vw, -40.0},
                                {x_cross + vw, -hh},
                                {90.0, -hh},
                                {90.0, hh},
                                {x_cross + vw, hh},
                                {x_cross + vw, 40.0},
                                {x_cross - vw, 40.0},
                                {x_cross - vw, hh},
                                {-40.0, hh}}};
  const Polyline vertical = from_below ? straight_line({x_cross, -40.0}, {x_cross, 40.0})
                                       : straight_line({x_cross, 40.0}, {x_cross, -40.0});
  s.centerlines = {straight_line({-40.0, 0.0}, {90.0, 0.0}), vertical,
                   straight_line({90.0, w}, {-40.0, w})};

  const Polyline lane = straight_line({-40.0, 0.0}, {90.0, 0.0});
  double t_a = x_cross / v + rng.uniform(-0.25, 0.25);

  std::array<double, kFine> agent_speed = const_speed(v_c);
  double agent_s0;
  if (yields) {
    // stop short of the main band; the deceleration starts at t = -1.0 and is
    // visible in the history
    const double stop_margin = hh + 0.5 * agent_fp.length + 0.6;
    double dist_at_react = v_c * (t_a + 1.0);
    while (dist_at_react - stop_margin < v_c * v_c / (2.0 * 4.2)) {
      t_a += 0.25;
      dist_at_react = v_c * (t_a + 1.0);
    }
    const double a_y = v_c * v_c / (2.0 * (dist_at_react - stop_margin));
    agent_speed = decel_speed(v_c, a_y, -1.0, 0.0);
    agent_s0 = 40.0 - v_c * (t_a + 1.5);
    d.ego_track = track_along_path(lane, 40.0 - 1.5 * v, const_speed(v));
  } else {
    agent_s0 = 40.0 - v_c * (t_a + 1.5);
    // ego stops before the crossing corridor
    const double stop_arc = x_cross - 3.7;
    std::array<double, kFine> ego_speed = stop_speed(v, 0.5, stop_arc, 6.5);
    d.ego_track = track_along_path(lane, 40.0 - 1.5 * v, ego_speed);
  }
  Track agent = track_along_path(vertical, agent_s0, agent_speed);
  d.add_scripted(agent, agent_fp, s, 1);

  const int target = 2 + rng.uniform_int(9);
  std::vector<LaneSlot> slots;
  const double away_y = from_below ? 14.0 : -14.0;
  const double away_h = from_below ? 1.5707963267948966 : -1.5707963267948966;
  for (int i = 0; i < 3; ++i)
    slots.push_back({{x_cross, away_y + (from_below ? 1.0 : -1.0) * i * 14.0}, away_h, rng.uniform(3.0, 8.0)});
  for (int i = 0; i < 4; ++i)
    slots.push_back({{rng.uniform(24.0, 55.0) + i * 14.0, w}, 3.14159265358979323846, rng.uniform(4.0, 9.0)});
  add_fillers(d, s, slots, target, rng);
}

void build_overtake(Draft& d, Scene& s, Rng& rng) {
  const double w = rng.uniform(3.0, 4.0);
  const double v = rng.uniform(6.0, 10.0);
  d.ego_fp = sample_footprint(rng);
  const Footprint lead_fp = sample_footprint(rng);
  const bool blocked = rng.bernoulli(0.5);

  s.drivable = band_polygon(-40.0, 90.0, -0.75 * w, 1.75 * w);
  s.centerlines = {straight_line({-40.0, 0.0}, {90.0, 0.0}),
                   straight_line({-40.0, w}, {90.0, w})};
  const Polyline lane = straight_line({-40.0, 0.0}, {90.0, 0.0});

  const double v_l = v * rng.uniform(0.3, 0.5);
  const double gap0 = rng.uniform(10.0, 16.0);
  const double d0 = gap0 + 0.5 * (d.ego_fp.length + lead_fp.length);
  Track lead = track_along_path(lane, 40.0 + d0 - 1.5 * v_l, const_speed(v_l));
  d.add_scripted(lead, lead_fp, s, 1);

  if (blocked) {
    const Footprint fast_fp = sample_footprint(rng);
    const double v_f = std::min(11.5, v * rng.uniform(1.25, 1.5));
    const double x_f0 = rng.uniform(-16.0, -9.0);
    Track fast = track_along_path(straight_line({-60.0, w}, {90.0, w}), 60.0 + x_f0 - 1.5 * v_f,
                                  const_speed(v_f));
    d.add_scripted(fast, fast_fp, s, 2);

    std::array<double, kFine> leader_arc;
    for (int i = 0; i < kFine; ++i)
      leader_arc[static_cast<std::size_t>(i)] = arc_at(const_speed(v_l), d0 - 1.5 * v_l, i);
    double min_gap = 0.5 * (d.ego_fp.length + lead_fp.length) + 2.0;
    std::array<double, kFine> ego_speed = follow_speed(v, 0.5, leader_arc, min_gap, 1.1, 5.5, 0.0);
    Track probe = track_along_path(lane, 40.0 - 1.5 * v, ego_speed);
    if (tracks_conflict(probe, d.ego_fp, lead, lead_fp, 0.4)) {
      ego_speed = follow_speed(v, 0.5, leader_arc, min_gap + 1.5, 1.3, 6.0, 0.0);
    }
    d.ego_track = track_along_path(lane, 40.0 - 1.5 * v, ego_speed);
  } else {
    // lane change: smoothstep lateral ramp between t = 0.5 and t = 2.0
    Track ego;
    for (int i = 0; i < kFine; ++i) {
      const double t = -1.5 + kFineDt * i;
      const double u = std::clamp((t - 0.5) / 1.5, 0.0, 1.0);
      const double y = w * u * u * (3.0 - 2.0 * u);
      ego.pos[static_cast<std::size_t>(i)] = {v * t, y};
    }
    for (int i = 0; i < kFine; ++i) {
      if (i + 1 < kFine) {
        const Vec2 dp = ego.pos[static_cast<std::size_t>(i + 1)] - ego.pos[static_cast<std::size_t>(i)];
        ego.heading[static_cast<std::size_t>(i)] = std::atan2(dp.y, dp.x);
      } else {
        ego.heading[static_cast<std::size_t>(i)] = ego.heading[static_cast<std::size_t>(i - 1)];
      }
    }
    d.ego_track = ego;
  }

  const int target = 2 + rng.uniform_int(9);
  std::vector<LaneSlot> slots;
  slots.push_back({{rng.uniform(34.0, 44.0), 0.0}, 0.0, v_l});
  const double base_left = rng.uniform(40.0, 52.0);
  for (int i = 0; i < 3; ++i)
    slots.push_back({{base_left + i * 16.0, w}, 0.0, std::min(12.0, v + rng.uniform(0.5, 2.0))});
  slots.push_back({{rng.uniform(-34.0, -26.0), w}, 0.0, rng.uniform(3.0, 5.0)});
  add_fillers(d, s, slots, target, rng);
}

}  // namespace

Scene generate_scene(std::uint64_t seed, ScenarioTag tag) {
  Rng root(seed);
  Rng rng = root.split(to_string(tag));
  Scene s;
  s.seed = seed;
  s.tag = tag;
  {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s-%016llx", to_string(tag).c_str(),
                  static_cast<unsigned long long>(seed));
    s.scene_id = buf;
  }
  Draft d;
  switch (tag) {
    case ScenarioTag::free_flow: build_free_flow(d, s, rng); break;
    case ScenarioTag::lead_brake: build_lead_brake(d, s, rng); break;
    case ScenarioTag::merge: build_merge(d, s, rng); break;
    case ScenarioTag::crossing: build_crossing(d, s, rng); break;
    case ScenarioTag::overtake: build_overtake(d, s, rng); break;
  }
  finalize(d, s);
  return s;
}

std::vector<Scene> generate_scenes(std::uint64_t seed0, int count,
                                   const std::vector<ScenarioTag>& tags) {
  if (tags.empty()) throw std::invalid_argument("generate_scenes: no tags given");
  std::vector<Scene> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    out.push_back(generate_scene(seed0 + static_cast<std::uint64_t>(i), tags[static_cast<std::size_t>(i) % tags.size()]));
  return out;
}

}  // namespace caad
