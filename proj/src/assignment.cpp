#include "caad/assignment.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace caad {

double masked_distance(const TrajectoryTP& pred, const TrajectoryTP& gt,
                       const std::vector<bool>& valid) {
  if (pred.points.size() != gt.points.size() || valid.size() != gt.points.size())
    throw std::invalid_argument("masked_distance: length mismatch");
  double acc = 0.0;
  int n = 0;
  for (std::size_t k = 0; k < valid.size(); ++k) {
    if (!valid[k]) continue;
    acc += geo::dist(pred.points[k], gt.points[k]);
    ++n;
  }
  if (n == 0) throw std::invalid_argument("masked_distance: no valid steps");
  return acc / n;
}

InteractionSet select_interaction_set(const Scene& scene, const MarginalPredictionSet& marginal,
                                      const Polyline& ego_ref_path, double threshold_margin) {
  if (marginal.candidates.size() != scene.agents.size())
    throw std::invalid_argument("select_interaction_set: marginal set does not match agents");
  InteractionSet set;
  for (std::size_t i = 0; i < scene.agents.size(); ++i) {
    const double threshold = 0.5 * scene.ego.footprint.width +
                             0.5 * scene.agents[i].footprint.width + threshold_margin;
    int best_k = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < marginal.candidates[i].size(); ++k) {
      const double d = geo::path_min_distance(marginal.candidates[i][k].points, ego_ref_path);
      if (d < best_d) {
        best_d = d;
        best_k = static_cast<int>(k);
      }
    }
    if (best_k >= 0 && best_d < threshold) {
      set.members.push_back(static_cast<int>(i));
      set.evidence[static_cast<int>(i)] = {best_k, best_d};
    }
  }
  return set;
}

ModeAssignment assign_modes(const std::vector<SceneHypothesis>& hyps, const TrajectoryTP& ego_gt,
                            const MarginalPredictionSet& marginal, const Scene& scene,
                            const InteractionSet& interaction, AssignStrategy strategy) {
  (void)interaction;
  if (hyps.empty()) throw std::invalid_argument("assign_modes: need at least one hypothesis");
  const std::vector<bool> ego_valid(ego_gt.points.size(), true);

  ModeAssignment out;
  out.mode_distances.reserve(hyps.size());
  for (const SceneHypothesis& h : hyps) {
    double d = masked_distance(h.ego_traj, ego_gt, ego_valid);
    if (strategy == AssignStrategy::all_actor) {
      for (std::size_t i = 0; i < scene.agents.size(); ++i) {
        const AgentState& a = scene.agents[i];
        if (!a.any_valid()) continue;
        d += masked_distance(h.agent_trajs[i], agent_gt_tp(a), a.gt_valid);
      }
    }
    out.mode_distances.push_back(d);
  }
  out.m_star = 0;
  for (std::size_t m = 1; m < out.mode_distances.size(); ++m)
    if (out.mode_distances[m] < out.mode_distances[static_cast<std::size_t>(out.m_star)])
      out.m_star = static_cast<int>(m);

  for (std::size_t i = 0; i < scene.agents.size(); ++i) {
    const AgentState& a = scene.agents[i];
    if (!a.any_valid() || marginal.candidates[i].empty()) {
      out.k_star.push_back(-1);
      continue;
    }
    const TrajectoryTP gt = agent_gt_tp(a);
    int best = 0;
    double best_d = masked_distance(marginal.candidates[i][0], gt, a.gt_valid);
    for (std::size_t k = 1; k < marginal.candidates[i].size(); ++k) {
      const double d = masked_distance(marginal.candidates[i][k], gt, a.gt_valid);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(k);
      }
    }
    out.k_star.push_back(best);
  }
  return out;
}

Polyline selection_path(const Scene& scene, SelectionCue cue) {
  if (cue == SelectionCue::spatial) {
    const TrajectorySP sp = gt_ego_sp(scene);
    return Polyline{sp.points};
  }
  Polyline line;
  line.pts.push_back(scene.ego.current().position());
  for (const Pose2& p : scene.ego.gt_future) {
    const Vec2 q{p.x, p.y};
    if (geo::dist(line.pts.back(), q) > 1e-6) line.pts.push_back(q);
  }
  if (line.pts.size() < 2) {
    const double h = scene.ego.current().heading;
    line.pts.push_back(line.pts.front() + Vec2{std::cos(h), std::sin(h)} * 0.5);
  }
  return line;
}

}  // namespace caad
