#pragma once

#include <string>
#include <vector>

#include "caad/scene.hpp"

namespace caad {

struct ComfortThresholds {
  double accel = 2.40;      // m/s^2, longitudinal acceleration
  double decel = 4.05;      // m/s^2, longitudinal deceleration
  double lateral = 4.89;    // m/s^2
  double jerk = 8.37;       // m/s^3
  double yaw_rate = 0.95;   // rad/s
  double yaw_accel = 1.93;  // rad/s^2
  double alpha_scale = 0.5; // alpha_k = alpha_scale * threshold_k
};

struct RewardConfig {
  double weight_ep = 5.0;
  double weight_ttc = 5.0;
  double weight_comfort = 2.0;
  double dd_comply = 2.0;    // meters
  double dd_violate = 6.0;   // meters
  double ttc_horizon = 1.0;  // seconds of constant-velocity projection
  double ttc_step = 0.1;
  double nc_step = 0.1;      // interpolation grid for collision checking
  double ep_floor = 0.1;     // minimum reference progress, meters
  double sanity_box = 500.0; // rollouts outside this box are rejected
  ComfortThresholds comfort;
};

struct ComfortTerm {
  std::string name;
  double peak = 0.0;       // measured extreme of the metric
  double threshold = 0.0;
  double delta = 0.0;      // max(0, peak - threshold)
  double alpha = 0.0;
  double score = 1.0;      // exp(-delta/alpha)
};

struct RewardBreakdown {
  double nc = 1.0, dac = 1.0, dd = 1.0;
  double ep = 0.0, ttc = 1.0, comfort = 1.0;
  double d_opp = 0.0;
  int t_ttc = -1;  // first TTC-infraction step, 1-indexed; -1 when none
  bool collided = false;
  bool at_fault = false;
  std::vector<ComfortTerm> comfort_terms;
  double reward = 0.0;
};

struct NcResult {
  double score = 1.0;
  bool collided = false;
  bool at_fault = false;
};

// All scoring runs in the scene (world) frame against the agents' GT futures.
NcResult score_nc(const TrajectoryTP& ego_rollout, const Scene& scene,
                  const RewardConfig& cfg = {});
double score_dac(const TrajectoryTP& ego_rollout, const DrivablePolygon& drivable);
double score_dd(const TrajectoryTP& ego_rollout, const Scene& scene, const RewardConfig& cfg = {},
                double* d_opp_out = nullptr);
double score_ttc(const TrajectoryTP& ego_rollout, const Scene& scene, const RewardConfig& cfg = {},
                 int* t_ttc_out = nullptr);
double score_comfort(const TrajectoryTP& ego_rollout, const Pose2& start_pose,
                     const RewardConfig& cfg = {}, std::vector<ComfortTerm>* terms_out = nullptr);
double score_ep(const TrajectoryTP& ego_rollout, const Scene& scene, const RewardConfig& cfg = {});

// Aggregate: (nc * dac * dd) * (5 ep + 5 ttc + 2 comfort) / 12.
RewardBreakdown score_rollout(const TrajectoryTP& ego_rollout, const Scene& scene,
                              const RewardConfig& cfg = {});

// Poses along a rollout with headings inferred from displacements.
std::vector<Pose2> rollout_poses(const TrajectoryTP& rollout, const Pose2& start);

}  // namespace caad
