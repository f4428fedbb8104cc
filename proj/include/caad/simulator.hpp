#pragma once

#include <map>
#include <string>
#include <vector>

#include "caad/model.hpp"
#include "caad/scene.hpp"

namespace caad {

enum class PolicyMode {
  model,       // joint-mode selection when available, marginal plan otherwise
  gt_replay,   // oracle: replay the scripted expert future
  zero_motion  // degenerate baseline
};

struct EpisodeResult {
  std::string scene_id;
  ScenarioTag tag = ScenarioTag::free_flow;
  bool success = false;
  bool collided = false;
  bool off_road = false;
  double progress_ratio = 0.0;  // in [0, 1+]
  int steps = 0;
  double comfort = 1.0;  // comfort score of the executed path
};

struct TagAggregate {
  int episodes = 0;
  double success_rate = 0.0;
  double driving_score = 0.0;  // progress x infraction multipliers, in [0, 1]
  double collision_rate = 0.0;
  double off_road_rate = 0.0;
  double mean_progress = 0.0;
};

struct EvalSummary {
  TagAggregate overall;
  std::map<std::string, TagAggregate> per_tag;
};

inline constexpr int kDefaultHorizonSteps = 16;

// Background-agent acceleration law: free-flow regulation toward the desired
// speed, capped by a gap-keeping term when a leader is ahead (gap in meters,
// negative means no leader). Always within [-4, 2] m/s^2.
double background_accel(double gap_ahead, double speed, double lead_speed, double desired_speed);

// Closed-loop episode: replan each step from the current state, execute the
// first waypoint of the selected plan, advance background agents (scripted GT
// until exhausted, then a gap-keeping car-following rule), and terminate on
// goal, collision, off-road or horizon. Deterministic given (scene, model).
EpisodeResult run_episode(const Scene& scene, const CaadModel* model, int horizon_steps,
                          PolicyMode policy);

EvalSummary evaluate(const std::vector<Scene>& scenes, const CaadModel* model, PolicyMode policy,
                     int horizon_steps = kDefaultHorizonSteps,
                     std::vector<EpisodeResult>* episodes_out = nullptr);

void save_eval_report(const std::string& path, const std::vector<EpisodeResult>& episodes,
                      const EvalSummary& summary);

}  // namespace caad
