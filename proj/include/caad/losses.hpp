#pragma once

#include <vector>

#include "caad/assignment.hpp"
#include "caad/model.hpp"
#include "caad/tensor.hpp"

namespace caad {

struct LossWeights {
  double lambda_joint = 1.0;
  double lambda_rl = 1.0;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
};

struct LossReport {
  double e2e = 0.0;
  double joint_reg = 0.0;
  double joint_cls = 0.0;
  double grpo = 0.0;
  double total = 0.0;
};

// Supervision targets for one (ego-frame) scene. Invalid-step entries are
// zeroed so no NaN can enter the loss graph; the masks carry the validity.
struct SceneTargets {
  std::vector<double> ego_tp;   // T*2
  std::vector<double> ego_sp;   // P*2
  TrajectoryTP ego_tp_traj;
  std::vector<std::vector<double>> agent_gt;    // [N] x T*2, sanitized
  std::vector<std::vector<double>> agent_mask;  // [N] x T*2, 1/0
  std::vector<bool> agent_has_valid;            // [N]
};

SceneTargets make_targets(const Scene& ego_scene);

// -alpha (1-p_t)^gamma log p_t with p = softmax(logits)
ad::Tensor focal_loss(const ad::Tensor& logits, int target, double gamma, double alpha);

// mean over masked elements of 0.5((mu-t)^2/sigma^2 + 2 log sigma + log 2pi)
ad::Tensor gaussian_nll(const ad::Tensor& mu, const ad::Tensor& sigma,
                        const std::vector<double>& target, const std::vector<double>& mask01);

// mean squared error over masked elements
ad::Tensor masked_mse(const ad::Tensor& pred, const std::vector<double>& target,
                      const std::vector<double>& mask01);

// Ego focal at m*, interaction agents' joint-mode focal at m*, remaining
// agents' marginal focal at their own k*.
ad::Tensor joint_cls_loss(const ModelOutput& out, const ModeAssignment& assign,
                          const InteractionSet& interaction, const LossWeights& w);

// Ego Gaussian NLL at m*; interaction agents L2 on their mode-m* joint
// trajectories; remaining agents L2 on their best marginal candidate.
ad::Tensor joint_reg_loss(const ModelOutput& out, const ModeAssignment& assign,
                          const InteractionSet& interaction, const SceneTargets& targets,
                          int t_fut);

// Winner-takes-all L2 on marginal agent candidates plus focal on marginal
// logits plus L2 on the ego temporal and spatial plans.
ad::Tensor e2e_loss(const ModelOutput& out, const SceneTargets& targets,
                    const std::vector<int>& k_star, const LossWeights& w);

// per-agent best marginal candidate, -1 for agents without valid GT
std::vector<int> best_marginal_modes(const MarginalPredictionSet& marginal, const Scene& scene);

ad::Tensor total_loss(const ad::Tensor& e2e, const ad::Tensor& joint_reg,
                      const ad::Tensor& joint_cls, const ad::Tensor& grpo, const LossWeights& w);

LossReport make_report(double e2e, double joint_reg, double joint_cls, double grpo,
                       const LossWeights& w);

}  // namespace caad
