#pragma once

#include <map>
#include <vector>

#include "caad/model.hpp"
#include "caad/scene.hpp"

namespace caad {

// Agents whose marginal candidates geometrically conflict with the ego
// reference path, plus the (k, distance) evidence that triggered inclusion.
struct InteractionSet {
  struct Evidence {
    int k = 0;
    double distance = 0.0;
  };
  std::vector<int> members;             // indices into scene.agents, ascending
  std::map<int, Evidence> evidence;

  bool contains(int agent_index) const { return evidence.count(agent_index) > 0; }
};

struct ModeAssignment {
  int m_star = 0;                      // argmin over modes, lowest index on ties
  std::vector<int> k_star;             // per agent; -1 when the agent has no valid GT
  std::vector<double> mode_distances;  // per mode, the ego (or aggregate) distance
};

enum class AssignStrategy { ego_centric, all_actor };
enum class SelectionCue { spatial, temporal };

// Mean Euclidean point error over valid steps. Throws when no step is valid.
double masked_distance(const TrajectoryTP& pred, const TrajectoryTP& gt,
                       const std::vector<bool>& valid);

// Eq.-style interaction test: agent i joins the set iff any of its K marginal
// candidates passes within (half-width sum + margin) of the ego reference
// path. During training the reference is the ground-truth ego spatial path.
InteractionSet select_interaction_set(const Scene& scene, const MarginalPredictionSet& marginal,
                                      const Polyline& ego_ref_path, double threshold_margin);

// Winner-takes-all joint mode selection. ego_centric uses only the ego
// trajectory error; all_actor sums ego plus all valid-GT agent errors.
// k_star is the per-agent best marginal candidate either way.
ModeAssignment assign_modes(const std::vector<SceneHypothesis>& hyps, const TrajectoryTP& ego_gt,
                            const MarginalPredictionSet& marginal, const Scene& scene,
                            const InteractionSet& interaction, AssignStrategy strategy);

// Reference polyline for the interaction test built from the chosen cue.
Polyline selection_path(const Scene& scene, SelectionCue cue);

}  // namespace caad
