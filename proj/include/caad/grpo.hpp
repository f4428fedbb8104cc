#pragma once

#include <utility>
#include <vector>

#include "caad/model.hpp"
#include "caad/reward.hpp"
#include "caad/rng.hpp"
#include "caad/tensor.hpp"

namespace caad {

enum class AlignScope { ego, all_agents };

struct GrpoConfig {
  int group_size = 8;       // G
  double clip_eps = 0.2;    // epsilon in the clipped objective
  double eps_std = 1e-6;    // reward-std floor for advantage normalization
  AlignScope scope = AlignScope::ego;
  double agent_rollout_sigma = 0.3;  // fixed sigma for all-agent ablation sampling
};

// G sampled ego rollouts for one joint mode with the quantities the clipped
// objective needs. old_logp is the diagonal-Gaussian log-density under the
// sampling-time parameters, detached from the graph.
struct RolloutGroup {
  int mode = 0;
  std::vector<std::vector<double>> rollouts;  // G x (T*2)
  std::vector<double> old_logp;               // G
  std::vector<double> rewards;                // G, filled by the scorer
  std::vector<bool> collided;                 // G
  std::vector<double> advantages;             // A
  std::vector<double> truncated;              // A~: -1 on collision, else max(0, A)
};

RolloutGroup sample_group(const SceneHypothesis& hyp, int group_size, Rng& rng);

// A = (r - mean) / max(std, eps_std) with the population std; truncation to
// -1 for collided rollouts and max(0, A) otherwise.
std::pair<std::vector<double>, std::vector<double>> compute_advantages(
    const std::vector<double>& rewards, const std::vector<bool>& collided, double eps_std);
void compute_advantages(RolloutGroup& group, double eps_std);

double gaussian_logp_plain(const std::vector<double>& mu, const std::vector<double>& sigma,
                           const std::vector<double>& x);

// [G] log-densities of the sample matrix under (mu, sigma), differentiable.
ad::Tensor gaussian_logp(const ad::Tensor& mu, const ad::Tensor& sigma,
                         const std::vector<std::vector<double>>& samples);

// Clipped surrogate: -mean over (m, g) of min(ratio*A~, clip(ratio)*A~) with
// ratio = exp(new_logp - old_logp). Throws on non-finite ratios, naming the
// offending (mode, rollout) pair.
ad::Tensor grpo_loss(const std::vector<RolloutGroup>& groups,
                     const std::vector<ad::Tensor>& mu_per_mode,
                     const std::vector<ad::Tensor>& sigma_per_mode, double clip_eps);

struct AlignStats {
  double mean_reward = 0.0;
  double collided_fraction = 0.0;
  int rollouts = 0;
  int dropped = 0;  // rollouts rejected by reward validation
  int groups_skipped = 0;
};

// Stage-3 contribution of one scene: sample a group per joint mode, score
// against the scene's GT futures, normalize advantages, and build the clipped
// objective. The returned tensor is differentiable through the ego heads
// only; with scope == all_agents, per-agent groups are added as well.
ad::Tensor align_scene_loss(const ModelOutput& out, const Scene& world_scene,
                            const FrameTransform& frame, const GrpoConfig& cfg,
                            const RewardConfig& reward_cfg, Rng& rng, AlignStats* stats);

}  // namespace caad
