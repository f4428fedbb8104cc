#include "caad/reward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace caad {

namespace {

Pose2 lerp_pose(const Pose2& a, const Pose2& b, double u) {
  const double dh = geo::wrap_angle(b.heading - a.heading);
  return {a.x + (b.x - a.x) * u, a.y + (b.y - a.y) * u, geo::wrap_angle(a.heading + dh * u)};
}

// Pose sequence at rollout steps 0..T where step 0 is the current pose.
std::vector<Pose2> full_poses(const TrajectoryTP& rollout, const Pose2& start) {
  std::vector<Pose2> poses{start};
  double prev_h = start.heading;
  for (std::size_t k = 0; k < rollout.points.size(); ++k) {
    const Vec2 prev = poses.back().position();
    const Vec2 cur = rollout.points[k];
    double h = prev_h;
    if (geo::dist(prev, cur) > 1e-6) h = std::atan2(cur.y - prev.y, cur.x - prev.x);
    poses.push_back({cur.x, cur.y, geo::wrap_angle(h)});
    prev_h = h;
  }
  return poses;
}

// Agent pose sequence over steps 0..T (step 0 current), plus per-step
// usability (valid GT up to that step).
struct AgentTrack {
  std::vector<Pose2> poses;
  std::vector<bool> usable;
  Footprint fp;
};

std::vector<AgentTrack> agent_tracks(const Scene& scene) {
  std::vector<AgentTrack> tracks;
  for (const AgentState& a : scene.agents) {
    AgentTrack t;
    t.fp = a.footprint;
    t.poses.push_back(a.current());
    t.usable.push_back(true);
    bool ok = true;
    for (std::size_t k = 0; k < a.gt_future.size(); ++k) {
      ok = ok && a.gt_valid[k];
      t.poses.push_back(a.gt_future[k]);
      t.usable.push_back(ok);
    }
    tracks.push_back(std::move(t));
  }
  return tracks;
}

Vec2 step_velocity(const std::vector<Pose2>& poses, std::size_t k, double dt) {
  return {(poses[k].x - poses[k - 1].x) / dt, (poses[k].y - poses[k - 1].y) / dt};
}

}  // namespace

std::vector<Pose2> rollout_poses(const TrajectoryTP& rollout, const Pose2& start) {
  auto poses = full_poses(rollout, start);
  poses.erase(poses.begin());
  return poses;
}

NcResult score_nc(const TrajectoryTP& ego_rollout, const Scene& scene, const RewardConfig& cfg) {
  NcResult res;
  const auto ego = full_poses(ego_rollout, scene.ego.current());
  const auto agents = agent_tracks(scene);
  const int T = static_cast<int>(ego_rollout.points.size());
  const int sub = std::max(1, static_cast<int>(std::lround(kDt / cfg.nc_step)));

  for (int k = 0; k < T && !res.collided; ++k) {
    for (int s = 1; s <= sub && !res.collided; ++s) {
      const double u = static_cast<double>(s) / sub;
      const Pose2 pe = lerp_pose(ego[static_cast<std::size_t>(k)], ego[static_cast<std::size_t>(k + 1)], u);
      for (const AgentTrack& a : agents) {
        if (!a.usable[static_cast<std::size_t>(k + 1)]) continue;
        const Pose2 pa = lerp_pose(a.poses[static_cast<std::size_t>(k)], a.poses[static_cast<std::size_t>(k + 1)], u);
        if (geo::rect_overlap(pe, scene.ego.footprint, pa, a.fp)) {
          res.collided = true;
          // at fault unless stationary and struck from behind
          const Vec2 v = step_velocity(ego, static_cast<std::size_t>(k + 1), kDt);
          const double speed = geo::norm(v);
          const double bearing = std::atan2(pa.y - pe.y, pa.x - pe.x);
          const double rear = geo::wrap_angle(bearing - geo::wrap_angle(pe.heading + 3.14159265358979323846));
          const bool struck_from_behind = std::abs(rear) <= 3.14159265358979323846 / 4.0;
          res.at_fault = !(speed < 0.1 && struck_from_behind);
          break;
        }
      }
    }
  }
  res.score = res.at_fault ? 0.0 : 1.0;
  return res;
}

double score_dac(const TrajectoryTP& ego_rollout, const DrivablePolygon& drivable) {
  const int T = static_cast<int>(ego_rollout.points.size());
  if (T < 1) throw std::invalid_argument("score_dac: empty rollout");
  int outside = 0;
  for (const Vec2& p : ego_rollout.points)
    if (!geo::point_in_polygon(p, drivable)) ++outside;
  return 1.0 - static_cast<double>(outside) / T;
}

double score_dd(const TrajectoryTP& ego_rollout, const Scene& scene, const RewardConfig& cfg,
                double* d_opp_out) {
  double d_opp = 0.0;
  if (!scene.centerlines.empty()) {
    double run = 0.0;
    Vec2 prev = scene.ego.current().position();
    for (const Vec2& cur : ego_rollout.points) {
      const Vec2 seg = cur - prev;
      if (geo::norm(seg) > 1e-9) {
        const Vec2 mid = prev + seg * 0.5;
        // nearest centerline carries the allowed travel direction
        const Polyline* best = nullptr;
        double best_d = std::numeric_limits<double>::infinity();
        for (const Polyline& line : scene.centerlines) {
          const double d = geo::path_min_distance({mid}, line);
          if (d < best_d) {
            best_d = d;
            best = &line;
          }
        }
        const double s0 = geo::progress_along(*best, prev);
        const double s1 = geo::progress_along(*best, cur);
        // tangent at the projection of the midpoint
        const double sm = geo::progress_along(*best, mid);
        Vec2 tangent{1.0, 0.0};
        double walked = 0.0;
        for (std::size_t i = 1; i < best->pts.size(); ++i) {
          const double len = geo::dist(best->pts[i - 1], best->pts[i]);
          if (sm <= walked + len || i + 1 == best->pts.size()) {
            tangent = (best->pts[i] - best->pts[i - 1]) * (1.0 / len);
            break;
          }
          walked += len;
        }
        if (geo::dot(seg, tangent) < 0.0) {
          run += std::max(0.0, s0 - s1);
          d_opp = std::max(d_opp, run);
        } else {
          run = 0.0;
        }
      }
      prev = cur;
    }
  }
  if (d_opp_out) *d_opp_out = d_opp;
  if (d_opp <= cfg.dd_comply) return 1.0;
  if (d_opp >= cfg.dd_violate) return 0.0;
  return 1.0 - (d_opp - cfg.dd_comply) / (cfg.dd_violate - cfg.dd_comply);
}

double score_ttc(const TrajectoryTP& ego_rollout, const Scene& scene, const RewardConfig& cfg,
                 int* t_ttc_out) {
  const auto ego = full_poses(ego_rollout, scene.ego.current());
  const auto agents = agent_tracks(scene);
  const int T = static_cast<int>(ego_rollout.points.size());
  int t_ttc = -1;
  const int n_proj = std::max(1, static_cast<int>(std::lround(cfg.ttc_horizon / cfg.ttc_step)));

  for (int k = 1; k <= T && t_ttc < 0; ++k) {
    const Vec2 ve = step_velocity(ego, static_cast<std::size_t>(k), kDt);
    for (const AgentTrack& a : agents) {
      if (!a.usable[static_cast<std::size_t>(k)]) continue;
      const Vec2 va = step_velocity(a.poses, static_cast<std::size_t>(k), kDt);
      for (int s = 1; s <= n_proj; ++s) {
        const double tau = s * cfg.ttc_step;
        Pose2 pe = ego[static_cast<std::size_t>(k)];
        pe.x += ve.x * tau;
        pe.y += ve.y * tau;
        Pose2 pa = a.poses[static_cast<std::size_t>(k)];
        pa.x += va.x * tau;
        pa.y += va.y * tau;
        if (geo::rect_overlap(pe, scene.ego.footprint, pa, a.fp)) {
          t_ttc = k;
          break;
        }
      }
      if (t_ttc >= 0) break;
    }
  }
  if (t_ttc_out) *t_ttc_out = t_ttc;
  if (t_ttc < 0) return 1.0;
  return static_cast<double>(std::min(t_ttc, T)) / T;
}

double score_comfort(const TrajectoryTP& ego_rollout, const Pose2& start_pose,
                     const RewardConfig& cfg, std::vector<ComfortTerm>* terms_out) {
  const int T = static_cast<int>(ego_rollout.points.size());
  if (T < 3) throw std::invalid_argument("score_comfort: need at least 3 steps");
  const auto poses = full_poses(ego_rollout, start_pose);

  std::vector<Vec2> vel;
  for (std::size_t j = 1; j < poses.size(); ++j) vel.push_back(step_velocity(poses, j, kDt));
  std::vector<double> psi;
  double prev_psi = start_pose.heading;
  for (const Vec2& v : vel) {
    if (geo::norm(v) > 1e-3) prev_psi = std::atan2(v.y, v.x);
    psi.push_back(prev_psi);
  }
  std::vector<Vec2> acc;
  for (std::size_t j = 1; j < vel.size(); ++j)
    acc.push_back({(vel[j].x - vel[j - 1].x) / kDt, (vel[j].y - vel[j - 1].y) / kDt});

  double max_accel = 0.0, max_decel = 0.0, max_lat = 0.0;
  for (std::size_t j = 0; j < acc.size(); ++j) {
    const Vec2 dir{std::cos(psi[j]), std::sin(psi[j])};
    const double lon = geo::dot(acc[j], dir);
    const double lat = geo::cross(dir, acc[j]);
    max_accel = std::max(max_accel, lon);
    max_decel = std::max(max_decel, -lon);
    max_lat = std::max(max_lat, std::abs(lat));
  }
  double max_jerk = 0.0;
  for (std::size_t j = 1; j < acc.size(); ++j)
    max_jerk = std::max(max_jerk, geo::norm({(acc[j].x - acc[j - 1].x) / kDt,
                                             (acc[j].y - acc[j - 1].y) / kDt}));
  std::vector<double> yaw_rate;
  for (std::size_t j = 1; j < psi.size(); ++j)
    yaw_rate.push_back(geo::wrap_angle(psi[j] - psi[j - 1]) / kDt);
  double max_yaw_rate = 0.0, max_yaw_acc = 0.0;
  for (double r : yaw_rate) max_yaw_rate = std::max(max_yaw_rate, std::abs(r));
  for (std::size_t j = 1; j < yaw_rate.size(); ++j)
    max_yaw_acc = std::max(max_yaw_acc, std::abs(yaw_rate[j] - yaw_rate[j - 1]) / kDt);

  const ComfortThresholds& th = cfg.comfort;
  const std::vector<std::pair<std::string, std::pair<double, double>>> metrics = {
      {"lon_accel", {max_accel, th.accel}},     {"lon_decel", {max_decel, th.decel}},
      {"lat_accel", {max_lat, th.lateral}},     {"jerk", {max_jerk, th.jerk}},
      {"yaw_rate", {max_yaw_rate, th.yaw_rate}}, {"yaw_accel", {max_yaw_acc, th.yaw_accel}}};
  double score = 1.0;
  for (const auto& [name, pv] : metrics) {
    ComfortTerm term;
    term.name = name;
    term.peak = pv.first;
    term.threshold = pv.second;
    term.alpha = th.alpha_scale * pv.second;
    term.delta = std::max(0.0, pv.first - pv.second);
    term.score = std::exp(-term.delta / term.alpha);
    score = std::min(score, term.score);
    if (terms_out) terms_out->push_back(term);
  }
  return score;
}

double score_ep(const TrajectoryTP& ego_rollout, const Scene& scene, const RewardConfig& cfg) {
  const double got = geo::progress_along(scene.route, ego_rollout.points.back()) -
                     geo::progress_along(scene.route, ego_rollout.points.front());
  const TrajectoryTP gt = gt_ego_tp(scene);
  const double ref = geo::progress_along(scene.route, gt.points.back()) -
                     geo::progress_along(scene.route, gt.points.front());
  return std::clamp(got / std::max(ref, cfg.ep_floor), 0.0, 1.0);
}

RewardBreakdown score_rollout(const TrajectoryTP& ego_rollout, const Scene& scene,
                              const RewardConfig& cfg) {
  if (static_cast<int>(ego_rollout.points.size()) != kFutureSteps)
    throw std::invalid_argument("score_rollout: rollout must have " +
                                std::to_string(kFutureSteps) + " steps");
  for (const Vec2& p : ego_rollout.points)
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || std::abs(p.x) > cfg.sanity_box ||
        std::abs(p.y) > cfg.sanity_box)
      throw std::domain_error("score_rollout: rollout leaves the sanity box");

  RewardBreakdown b;
  const NcResult nc = score_nc(ego_rollout, scene, cfg);
  b.nc = nc.score;
  b.collided = nc.collided;
  b.at_fault = nc.at_fault;
  b.dac = score_dac(ego_rollout, scene.drivable);
  b.dd = score_dd(ego_rollout, scene, cfg, &b.d_opp);
  b.ttc = score_ttc(ego_rollout, scene, cfg, &b.t_ttc);
  b.comfort = score_comfort(ego_rollout, scene.ego.current(), cfg, &b.comfort_terms);
  b.ep = score_ep(ego_rollout, scene, cfg);
  const double quality = (cfg.weight_ep * b.ep + cfg.weight_ttc * b.ttc +
                          cfg.weight_comfort * b.comfort) /
                         (cfg.weight_ep + cfg.weight_ttc + cfg.weight_comfort);
  b.reward = b.nc * b.dac * b.dd * quality;
  return b;
}

}  // namespace caad
