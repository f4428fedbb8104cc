#include "caad/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "caad/reward.hpp"
#include "caad/scene_io.hpp"

namespace caad {

namespace {

constexpr double kGoalRadius = 2.0;
constexpr double kMaxDecel = 4.0;   // background comfortable-deceleration bound
constexpr double kMaxAccel = 2.0;
constexpr double kGapTime = 2.0;    // desired time gap, seconds

struct SimAgent {
  AgentState base;
  std::deque<Pose2> history;  // last H poses
  Pose2 pose;
  double speed = 0.0;
  int scripted_next = 0;  // next GT future index to replay
  double desired_speed = 0.0;
};

Pose2 lerp_pose(const Pose2& a, const Pose2& b, double u) {
  const double dh = geo::wrap_angle(b.heading - a.heading);
  return {a.x + (b.x - a.x) * u, a.y + (b.y - a.y) * u, geo::wrap_angle(a.heading + dh * u)};
}

// nearest centerline and its tangent at the projection of p
const Polyline* nearest_centerline(const Scene& scene, Vec2 p, Vec2* tangent_out) {
  const Polyline* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (const Polyline& line : scene.centerlines) {
    const double d = geo::path_min_distance({p}, line);
    if (d < best_d) {
      best_d = d;
      best = &line;
    }
  }
  if (best && tangent_out) {
    const double s = geo::progress_along(*best, p);
    double walked = 0.0;
    *tangent_out = {1.0, 0.0};
    for (std::size_t i = 1; i < best->pts.size(); ++i) {
      const double len = geo::dist(best->pts[i - 1], best->pts[i]);
      if (s <= walked + len || i + 1 == best->pts.size()) {
        *tangent_out = (best->pts[i] - best->pts[i - 1]) * (1.0 / len);
        break;
      }
      walked += len;
    }
  }
  return best;
}

}  // namespace

double background_accel(double gap_ahead, double speed, double lead_speed, double desired_speed) {
  double accel = std::clamp((desired_speed - speed) / 1.0, -kMaxDecel, kMaxAccel);
  if (gap_ahead >= 0.0) {
    const double v_safe = std::clamp(gap_ahead / kGapTime + 0.5 * lead_speed, 0.0, desired_speed);
    accel = std::min(accel, std::clamp((v_safe - speed) / 0.5, -kMaxDecel, kMaxAccel));
  }
  return accel;
}

namespace {

// Gap-keeping background rule after the scripted horizon. Never exceeds the
// comfortable deceleration bound and keeps the lane direction.
void car_following_step(SimAgent& a, const Scene& scene, const Pose2& ego_pose, double ego_speed,
                        const std::vector<SimAgent>& others, std::size_t self_index) {
  Vec2 tangent{std::cos(a.pose.heading), std::sin(a.pose.heading)};
  const Polyline* lane = nearest_centerline(scene, a.pose.position(), &tangent);

  double accel = background_accel(-1.0, a.speed, 0.0, a.desired_speed);
  const double lane_half = 1.8;
  auto consider_leader = [&](Vec2 pos, double lead_speed, double lead_half_len) {
    const Vec2 rel = pos - a.pose.position();
    const double ahead = geo::dot(rel, tangent);
    const double lateral = std::abs(geo::cross(tangent, rel));
    if (ahead <= 0.0 || lateral > lane_half) return;
    const double gap = ahead - 0.5 * a.base.footprint.length - lead_half_len - 1.5;
    accel = std::min(accel, background_accel(std::max(0.0, gap), a.speed, lead_speed, a.desired_speed));
  };
  consider_leader(ego_pose.position(), ego_speed, 0.5 * scene.ego.footprint.length);
  for (std::size_t j = 0; j < others.size(); ++j) {
    if (j == self_index) continue;
    consider_leader(others[j].pose.position(), others[j].speed, 0.5 * others[j].base.footprint.length);
  }

  a.speed = std::max(0.0, a.speed + accel * kDt);
  const Vec2 step = tangent * (a.speed * kDt);
  Pose2 next{a.pose.x + step.x, a.pose.y + step.y, a.pose.heading};
  if (a.speed > 1e-6 && lane) next.heading = std::atan2(tangent.y, tangent.x);
  a.pose = next;
}

}  // namespace

EpisodeResult run_episode(const Scene& scene, const CaadModel* model, int horizon_steps,
                          PolicyMode policy) {
  if (policy == PolicyMode::model && model == nullptr)
    throw std::invalid_argument("run_episode: model policy requires a model");

  EpisodeResult res;
  res.scene_id = scene.scene_id;
  res.tag = scene.tag;

  const Vec2 goal = scene.route.pts.back();
  const double route_len = std::max(scene.route.length(), 0.1);

  // ego state
  std::deque<Pose2> ego_hist(scene.ego.history.begin(), scene.ego.history.end());
  Pose2 ego_pose = scene.ego.current();
  double ego_speed = scene.ego.speed();

  std::vector<SimAgent> agents;
  for (const AgentState& a : scene.agents) {
    SimAgent sa;
    sa.base = a;
    sa.history.assign(a.history.begin(), a.history.end());
    sa.pose = a.current();
    sa.speed = a.speed();
    sa.scripted_next = 0;
    // desired speed after the script: the last scripted speed
    if (a.gt_future.size() >= 2) {
      const Pose2& p1 = a.gt_future[a.gt_future.size() - 2];
      const Pose2& p2 = a.gt_future.back();
      sa.desired_speed = geo::dist(p1.position(), p2.position()) / kDt;
    } else {
      sa.desired_speed = sa.speed;
    }
    agents.push_back(std::move(sa));
  }

  std::vector<Vec2> executed{ego_pose.position()};

  for (int step = 1; step <= horizon_steps; ++step) {
    // ---- plan -------------------------------------------------------------
    Vec2 target = ego_pose.position();
    if (policy == PolicyMode::gt_replay) {
      if (step <= static_cast<int>(scene.ego.gt_future.size()))
        target = scene.ego.gt_future[static_cast<std::size_t>(step - 1)].position();
    } else if (policy == PolicyMode::model) {
      // snapshot of the current state as a scene
      Scene snap = scene;
      snap.ego.history.assign(ego_hist.begin(), ego_hist.end());
      snap.ego.gt_future.assign(static_cast<std::size_t>(kFutureSteps), ego_pose);
      snap.ego.gt_valid.assign(static_cast<std::size_t>(kFutureSteps), true);
      for (std::size_t i = 0; i < agents.size(); ++i) {
        snap.agents[i].history.assign(agents[i].history.begin(), agents[i].history.end());
        snap.agents[i].gt_future.assign(static_cast<std::size_t>(kFutureSteps), agents[i].pose);
        snap.agents[i].gt_valid.assign(static_cast<std::size_t>(kFutureSteps), true);
      }
      // remaining route from the current projection
      const double s = geo::progress_along(scene.route, ego_pose.position());
      Polyline rem;
      rem.pts.push_back(ego_pose.position());
      double walked = 0.0;
      for (std::size_t i = 1; i < scene.route.pts.size(); ++i) {
        walked += geo::dist(scene.route.pts[i - 1], scene.route.pts[i]);
        if (walked > s + 0.5) rem.pts.push_back(scene.route.pts[i]);
      }
      if (rem.pts.size() < 2)
        rem.pts.push_back(rem.pts.front() +
                          Vec2{std::cos(ego_pose.heading), std::sin(ego_pose.heading)} * 2.0);
      snap.route = rem;

      const FrameTransform frame = ego_frame_of(snap);
      const ModelOutput out = model->forward(ego_frame_transform(snap));
      Vec2 wp{0.0, 0.0};
      if (out.has_joint) {
        // highest ego joint-mode probability
        const auto& logits = out.ego_mode_logits.values();
        std::size_t best = 0;
        for (std::size_t m = 1; m < logits.size(); ++m)
          if (logits[m] > logits[best]) best = m;
        wp = {out.ego_mode_mu[best].values()[0], out.ego_mode_mu[best].values()[1]};
      } else {
        wp = {out.ego_tp_mu.values()[0], out.ego_tp_mu.values()[1]};
      }
      target = frame.to_world(wp);
    }

    // ---- execute: kinematic teleport to the waypoint ------------------------
    Pose2 prev_pose = ego_pose;
    Pose2 next_pose = ego_pose;
    next_pose.x = target.x;
    next_pose.y = target.y;
    if (geo::dist(prev_pose.position(), target) > 1e-6)
      next_pose.heading = std::atan2(target.y - prev_pose.y, target.x - prev_pose.x);

    // ---- advance background agents -----------------------------------------
    std::vector<Pose2> agent_prev(agents.size());
    for (std::size_t i = 0; i < agents.size(); ++i) {
      agent_prev[i] = agents[i].pose;
      SimAgent& a = agents[i];
      if (a.scripted_next < static_cast<int>(a.base.gt_future.size())) {
        const Pose2 nxt = a.base.gt_future[static_cast<std::size_t>(a.scripted_next)];
        a.speed = geo::dist(a.pose.position(), nxt.position()) / kDt;
        a.pose = nxt;
        ++a.scripted_next;
      } else {
        car_following_step(a, scene, prev_pose, ego_speed, agents, i);
      }
    }

    // ---- collision and termination checks ----------------------------------
    bool collided = false;
    for (std::size_t i = 0; i < agents.size() && !collided; ++i) {
      for (int sub = 1; sub <= 5 && !collided; ++sub) {
        const double u = sub / 5.0;
        const Pose2 pe = lerp_pose(prev_pose, next_pose, u);
        const Pose2 pa = lerp_pose(agent_prev[i], agents[i].pose, u);
        collided = geo::rect_overlap(pe, scene.ego.footprint, pa, agents[i].base.footprint);
      }
    }

    ego_speed = geo::dist(prev_pose.position(), next_pose.position()) / kDt;
    ego_pose = next_pose;
    ego_hist.push_back(ego_pose);
    while (ego_hist.size() > static_cast<std::size_t>(kHistorySteps)) ego_hist.pop_front();
    for (SimAgent& a : agents) {
      a.history.push_back(a.pose);
      while (a.history.size() > static_cast<std::size_t>(kHistorySteps)) a.history.pop_front();
    }
    executed.push_back(ego_pose.position());
    res.steps = step;

    if (collided) {
      res.collided = true;
      break;
    }
    if (!geo::point_in_polygon(ego_pose.position(), scene.drivable)) {
      res.off_road = true;
      break;
    }
    if (geo::dist(ego_pose.position(), goal) <= kGoalRadius) {
      res.success = true;
      break;
    }
  }

  res.progress_ratio =
      std::max(0.0, geo::progress_along(scene.route, executed.back())) / route_len;
  if (executed.size() >= 4) {
    TrajectoryTP path;
    for (std::size_t i = 1; i < executed.size(); ++i) path.points.push_back(executed[i]);
    res.comfort = score_comfort(path, scene.ego.current());
  }
  if (res.collided || res.off_road) res.success = false;
  return res;
}

EvalSummary evaluate(const std::vector<Scene>& scenes, const CaadModel* model, PolicyMode policy,
                     int horizon_steps, std::vector<EpisodeResult>* episodes_out) {
  if (scenes.empty()) throw std::invalid_argument("evaluate: empty scene set");
  EvalSummary summary;
  std::map<std::string, std::vector<EpisodeResult>> by_tag;
  std::vector<EpisodeResult> all;
  for (const Scene& s : scenes) {
    EpisodeResult r = run_episode(s, model, horizon_steps, policy);
    by_tag[to_string(s.tag)].push_back(r);
    all.push_back(r);
    if (episodes_out) episodes_out->push_back(std::move(r));
  }
  auto aggregate = [](const std::vector<EpisodeResult>& rs) {
    TagAggregate t;
    t.episodes = static_cast<int>(rs.size());
    for (const EpisodeResult& r : rs) {
      t.success_rate += r.success ? 1.0 : 0.0;
      double ds = std::min(r.progress_ratio, 1.0);
      if (r.collided) ds *= 0.5;
      if (r.off_road) ds *= 0.7;
      t.driving_score += ds;
      t.collision_rate += r.collided ? 1.0 : 0.0;
      t.off_road_rate += r.off_road ? 1.0 : 0.0;
      t.mean_progress += r.progress_ratio;
    }
    const double n = std::max(1, t.episodes);
    t.success_rate /= n;
    t.driving_score /= n;
    t.collision_rate /= n;
    t.off_road_rate /= n;
    t.mean_progress /= n;
    return t;
  };
  summary.overall = aggregate(all);
  for (const auto& [tag, rs] : by_tag) summary.per_tag[tag] = aggregate(rs);
  return summary;
}

void save_eval_report(const std::string& path, const std::vector<EpisodeResult>& episodes,
                      const EvalSummary& summary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_eval_report: cannot open '" + path + "'");
  out << "{\"format\":\"caad-eval\",\"version\":1}\n";
  for (const EpisodeResult& r : episodes) {
    JsonWriter w;
    w.begin_object();
    w.key("record").value("episode");
    w.key("scene_id").value(r.scene_id);
    w.key("tag").value(to_string(r.tag));
    w.key("success").value(r.success);
    w.key("collided").value(r.collided);
    w.key("off_road").value(r.off_road);
    w.key("progress_ratio").value(r.progress_ratio);
    w.key("steps").value(r.steps);
    w.key("comfort").value(r.comfort);
    w.end_object();
    out << w.str() << '\n';
  }
  auto write_agg = [](JsonWriter& w, const TagAggregate& t) {
    w.begin_object();
    w.key("episodes").value(t.episodes);
    w.key("success_rate").value(t.success_rate);
    w.key("driving_score").value(t.driving_score);
    w.key("collision_rate").value(t.collision_rate);
    w.key("off_road_rate").value(t.off_road_rate);
    w.key("mean_progress").value(t.mean_progress);
    w.end_object();
  };
  JsonWriter w;
  w.begin_object();
  w.key("record").value("summary");
  w.key("overall");
  write_agg(w, summary.overall);
  w.key("per_tag").begin_object();
  for (const auto& [tag, agg] : summary.per_tag) {
    w.key(tag);
    write_agg(w, agg);
  }
  w.end_object();
  w.end_object();
  out << w.str() << '\n';
}

}  // namespace caad
