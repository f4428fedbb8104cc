#include "caad/scene.hpp"

#include <cmath>
#include <stdexcept>

namespace caad {

std::string to_string(ScenarioTag tag) {
  switch (tag) {
    case ScenarioTag::merge: return "merge";
    case ScenarioTag::crossing: return "crossing";
    case ScenarioTag::lead_brake: return "lead_brake";
    case ScenarioTag::overtake: return "overtake";
    case ScenarioTag::free_flow: return "free_flow";
  }
  throw std::logic_error("to_string: bad ScenarioTag");
}

ScenarioTag tag_from_string(const std::string& s) {
  for (ScenarioTag t : kAllTags)
    if (to_string(t) == s) return t;
  throw std::invalid_argument("unknown scenario tag '" + s + "'");
}

double AgentState::speed() const { return geo::norm(velocity()); }

Vec2 AgentState::velocity() const {
  if (history.size() < 2) return {0.0, 0.0};
  const Pose2& a = history[history.size() - 2];
  const Pose2& b = history.back();
  return {(b.x - a.x) / kDt, (b.y - a.y) / kDt};
}

bool AgentState::any_valid() const {
  for (bool v : gt_valid)
    if (v) return true;
  return false;
}

Vec2 FrameTransform::to_ego(Vec2 p) const {
  const double c = std::cos(heading), s = std::sin(heading);
  const double dx = p.x - cx, dy = p.y - cy;
  return {c * dx + s * dy, -s * dx + c * dy};
}

Vec2 FrameTransform::to_world(Vec2 p) const {
  const double c = std::cos(heading), s = std::sin(heading);
  return {cx + c * p.x - s * p.y, cy + s * p.x + c * p.y};
}

Pose2 FrameTransform::to_ego(const Pose2& p) const {
  const Vec2 q = to_ego(Vec2{p.x, p.y});
  return {q.x, q.y, geo::wrap_angle(p.heading - heading)};
}

Pose2 FrameTransform::to_world(const Pose2& p) const {
  const Vec2 q = to_world(Vec2{p.x, p.y});
  return {q.x, q.y, geo::wrap_angle(p.heading + heading)};
}

FrameTransform ego_frame_of(const Scene& s) {
  const Pose2& c = s.ego.current();
  return {c.x, c.y, c.heading};
}

namespace {
AgentState transform_agent(const AgentState& a, const FrameTransform& f) {
  AgentState out = a;
  for (Pose2& p : out.history) p = f.to_ego(p);
  for (Pose2& p : out.gt_future) p = f.to_ego(p);
  return out;
}
}  // namespace

Scene ego_frame_transform(const Scene& s) {
  const FrameTransform f = ego_frame_of(s);
  Scene out = s;
  out.ego = transform_agent(s.ego, f);
  for (std::size_t i = 0; i < s.agents.size(); ++i) out.agents[i] = transform_agent(s.agents[i], f);
  for (Vec2& p : out.route.pts) p = f.to_ego(p);
  for (Vec2& p : out.drivable.verts) p = f.to_ego(p);
  for (Polyline& line : out.centerlines)
    for (Vec2& p : line.pts) p = f.to_ego(p);
  return out;
}

TrajectoryTP gt_ego_tp(const Scene& s) {
  TrajectoryTP t;
  t.points.reserve(s.ego.gt_future.size());
  for (const Pose2& p : s.ego.gt_future) t.points.push_back({p.x, p.y});
  return t;
}

TrajectoryTP agent_gt_tp(const AgentState& a) {
  TrajectoryTP t;
  t.points.reserve(a.gt_future.size());
  for (const Pose2& p : a.gt_future) t.points.push_back({p.x, p.y});
  return t;
}

TrajectorySP gt_ego_sp(const Scene& s) {
  // Build the driven path, dropping near-duplicate points from stop phases.
  std::vector<Vec2> path;
  path.push_back(s.ego.current().position());
  for (const Pose2& p : s.ego.gt_future) {
    const Vec2 q{p.x, p.y};
    if (geo::dist(path.back(), q) > 1e-6) path.push_back(q);
  }
  const double heading0 = s.ego.current().heading;
  Vec2 end_dir{std::cos(heading0), std::sin(heading0)};
  if (path.size() >= 2) {
    const Vec2 d = path.back() - path[path.size() - 2];
    const double n = geo::norm(d);
    if (n > 1e-9) end_dir = d * (1.0 / n);
  }

  // Chord stepping: each sample sits exactly 2 m (Euclidean) from the
  // previous one, matching the trajectory layout the spatial head emits.
  TrajectorySP sp;
  sp.points.push_back(path.front());
  std::size_t seg = 1;
  while (static_cast<int>(sp.points.size()) < kSpatialPoints && seg < path.size()) {
    const Vec2 c = sp.points.back();
    bool placed = false;
    for (; seg < path.size(); ++seg) {
      const Vec2 a = path[seg - 1];
      const Vec2 b = path[seg];
      // first t in [0,1] with |a + t(b-a) - c| = spacing, if any
      const Vec2 d = b - a;
      const Vec2 f = a - c;
      const double qa = geo::dot(d, d);
      const double qb = 2.0 * geo::dot(f, d);
      const double qc = geo::dot(f, f) - kSpatialSpacing * kSpatialSpacing;
      const double disc = qb * qb - 4.0 * qa * qc;
      if (disc >= 0.0 && qa > 0.0) {
        const double t = (-qb + std::sqrt(disc)) / (2.0 * qa);
        if (t >= 0.0 && t <= 1.0) {
          sp.points.push_back(a + d * t);
          placed = true;
          break;
        }
      }
    }
    if (!placed) break;
  }
  if (sp.points.size() >= 2) {
    const Vec2 d = sp.points.back() - sp.points[sp.points.size() - 2];
    end_dir = d * (1.0 / geo::norm(d));
  }
  // extrapolate along the final direction to exactly P points
  while (static_cast<int>(sp.points.size()) < kSpatialPoints)
    sp.points.push_back(sp.points.back() + end_dir * kSpatialSpacing);
  return sp;
}

void validate_scene(const Scene& s) {
  if (s.ego.history.size() != kHistorySteps)
    throw std::invalid_argument("scene: ego history must have " + std::to_string(kHistorySteps) +
                                " poses");
  if (s.ego.gt_future.size() != kFutureSteps)
    throw std::invalid_argument("scene: ego future must have " + std::to_string(kFutureSteps) +
                                " poses");
  if (s.agents.size() > 16) throw std::invalid_argument("scene: more than 16 agents");
  s.route.validate();
  s.drivable.validate();
  if (!geo::point_in_polygon(s.ego.current().position(), s.drivable))
    throw std::invalid_argument("scene: ego current pose outside drivable polygon");
  if (geo::dist(s.route.pts.front(), s.ego.current().position()) > 1.0)
    throw std::invalid_argument("scene: route must start within 1 m of the ego");
  auto check_finite = [](const std::vector<Pose2>& ps, const char* what) {
    for (const Pose2& p : ps)
      if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.heading))
        throw std::invalid_argument(std::string("scene: non-finite pose in ") + what);
  };
  check_finite(s.ego.history, "ego history");
  check_finite(s.ego.gt_future, "ego future");
  for (const AgentState& a : s.agents) {
    if (a.history.size() != kHistorySteps || a.gt_future.size() != kFutureSteps ||
        a.gt_valid.size() != kFutureSteps)
      throw std::invalid_argument("scene: agent " + std::to_string(a.id) + " has bad step counts");
    if (!a.any_valid())
      throw std::invalid_argument("scene: agent " + std::to_string(a.id) + " has no valid GT step");
    check_finite(a.history, "agent history");
    check_finite(a.gt_future, "agent future");
  }
  for (const Polyline& line : s.centerlines) line.validate();
}

}  // namespace caad
