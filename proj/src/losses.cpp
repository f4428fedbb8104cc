#include "caad/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace caad {

using ad::Tensor;

namespace {
constexpr double kLog2Pi = 1.8378770664093453;

int mask_count(const std::vector<double>& mask01) {
  int n = 0;
  for (double m : mask01)
    if (m != 0.0) ++n;
  return n;
}
}  // namespace

SceneTargets make_targets(const Scene& ego_scene) {
  SceneTargets t;
  t.ego_tp_traj = gt_ego_tp(ego_scene);
  for (const Vec2& p : t.ego_tp_traj.points) {
    t.ego_tp.push_back(p.x);
    t.ego_tp.push_back(p.y);
  }
  const TrajectorySP sp = gt_ego_sp(ego_scene);
  for (const Vec2& p : sp.points) {
    t.ego_sp.push_back(p.x);
    t.ego_sp.push_back(p.y);
  }
  for (const AgentState& a : ego_scene.agents) {
    std::vector<double> gt, mask;
    for (std::size_t k = 0; k < a.gt_future.size(); ++k) {
      const bool v = a.gt_valid[k];
      gt.push_back(v ? a.gt_future[k].x : 0.0);
      gt.push_back(v ? a.gt_future[k].y : 0.0);
      mask.push_back(v ? 1.0 : 0.0);
      mask.push_back(v ? 1.0 : 0.0);
    }
    t.agent_gt.push_back(std::move(gt));
    t.agent_mask.push_back(std::move(mask));
    t.agent_has_valid.push_back(a.any_valid());
  }
  return t;
}

Tensor focal_loss(const Tensor& logits, int target, double gamma, double alpha) {
  if (target < 0 || target >= logits.size())
    throw std::invalid_argument("focal_loss: target out of range");
  Tensor p = ad::softmax(logits);
  Tensor pt = ad::select_index(p, target);
  Tensor one_minus = ad::add_scalar(ad::neg(pt), 1.0);
  Tensor weight = ad::pow_const(one_minus, gamma);
  return ad::mul_scalar(ad::mul(weight, ad::log(pt)), -alpha);
}

Tensor gaussian_nll(const Tensor& mu, const Tensor& sigma, const std::vector<double>& target,
                    const std::vector<double>& mask01) {
  const int n = mask_count(mask01);
  if (n == 0) throw std::invalid_argument("gaussian_nll: no valid elements");
  Tensor tgt = Tensor::from(mu.shape(), target);
  Tensor diff = ad::sub(mu, tgt);
  Tensor q = ad::div(ad::mul(diff, diff), ad::mul(sigma, sigma));
  Tensor per_elem =
      ad::mul_scalar(ad::add_scalar(ad::add(q, ad::mul_scalar(ad::log(sigma), 2.0)), kLog2Pi), 0.5);
  return ad::mul_scalar(ad::sum(ad::apply_mask(per_elem, mask01)), 1.0 / n);
}

Tensor masked_mse(const Tensor& pred, const std::vector<double>& target,
                  const std::vector<double>& mask01) {
  const int n = mask_count(mask01);
  if (n == 0) throw std::invalid_argument("masked_mse: no valid elements");
  Tensor tgt = Tensor::from(pred.shape(), target);
  Tensor diff = ad::sub(pred, tgt);
  return ad::mul_scalar(ad::sum(ad::apply_mask(ad::mul(diff, diff), mask01)), 1.0 / n);
}

Tensor joint_cls_loss(const ModelOutput& out, const ModeAssignment& assign,
                      const InteractionSet& interaction, const LossWeights& w) {
  if (!out.has_joint) throw std::logic_error("joint_cls_loss: model has no joint branch");
  Tensor loss = focal_loss(out.ego_mode_logits, assign.m_star, w.focal_gamma, w.focal_alpha);
  for (int i = 0; i < out.n_agents; ++i) {
    if (assign.k_star[static_cast<std::size_t>(i)] < 0) continue;  // no valid GT
    if (interaction.contains(i)) {
      loss = ad::add(loss, focal_loss(out.agent_mode_logits[static_cast<std::size_t>(i)],
                                      assign.m_star, w.focal_gamma, w.focal_alpha));
    } else {
      loss = ad::add(loss, focal_loss(out.agent_logits[static_cast<std::size_t>(i)],
                                      assign.k_star[static_cast<std::size_t>(i)], w.focal_gamma,
                                      w.focal_alpha));
    }
  }
  return loss;
}

Tensor joint_reg_loss(const ModelOutput& out, const ModeAssignment& assign,
                      const InteractionSet& interaction, const SceneTargets& targets, int t_fut) {
  if (!out.has_joint) throw std::logic_error("joint_reg_loss: model has no joint branch");
  const std::vector<double> ego_mask(targets.ego_tp.size(), 1.0);
  const std::size_t m = static_cast<std::size_t>(assign.m_star);
  Tensor loss = gaussian_nll(out.ego_mode_mu[m], out.ego_mode_sigma[m], targets.ego_tp, ego_mask);
  for (int i = 0; i < out.n_agents; ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    if (assign.k_star[si] < 0) continue;
    if (interaction.contains(i)) {
      loss = ad::add(loss, masked_mse(out.agent_mode_traj[m][si], targets.agent_gt[si],
                                      targets.agent_mask[si]));
    } else {
      loss = ad::add(loss, masked_mse(out.candidate(i, assign.k_star[si], t_fut),
                                      targets.agent_gt[si], targets.agent_mask[si]));
    }
  }
  return loss;
}

std::vector<int> best_marginal_modes(const MarginalPredictionSet& marginal, const Scene& scene) {
  std::vector<int> k_star;
  for (std::size_t i = 0; i < scene.agents.size(); ++i) {
    const AgentState& a = scene.agents[i];
    if (!a.any_valid() || marginal.candidates[i].empty()) {
      k_star.push_back(-1);
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
    k_star.push_back(best);
  }
  return k_star;
}

Tensor e2e_loss(const ModelOutput& out, const SceneTargets& targets,
                const std::vector<int>& k_star, const LossWeights& w) {
  const std::vector<double> ego_mask(targets.ego_tp.size(), 1.0);
  const std::vector<double> sp_mask(targets.ego_sp.size(), 1.0);
  const int t_fut = static_cast<int>(targets.ego_tp.size()) / 2;
  Tensor loss = ad::add(masked_mse(out.ego_tp_mu, targets.ego_tp, ego_mask),
                        masked_mse(out.ego_sp, targets.ego_sp, sp_mask));
  for (int i = 0; i < out.n_agents; ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    if (k_star[si] < 0) continue;
    loss = ad::add(loss, masked_mse(out.candidate(i, k_star[si], t_fut), targets.agent_gt[si],
                                    targets.agent_mask[si]));
    loss = ad::add(loss, focal_loss(out.agent_logits[si], k_star[si], w.focal_gamma, w.focal_alpha));
  }
  return loss;
}

Tensor total_loss(const Tensor& e2e, const Tensor& joint_reg, const Tensor& joint_cls,
                  const Tensor& grpo, const LossWeights& w) {
  Tensor t = e2e;
  if (w.lambda_joint != 0.0)
    t = ad::add(t, ad::mul_scalar(ad::add(joint_reg, joint_cls), w.lambda_joint));
  if (w.lambda_rl != 0.0) t = ad::add(t, ad::mul_scalar(grpo, w.lambda_rl));
  return t;
}

LossReport make_report(double e2e, double joint_reg, double joint_cls, double grpo,
                       const LossWeights& w) {
  LossReport r;
  r.e2e = e2e;
  r.joint_reg = joint_reg;
  r.joint_cls = joint_cls;
  r.grpo = grpo;
  r.total = e2e + w.lambda_joint * (joint_reg + joint_cls) + w.lambda_rl * grpo;
  return r;
}

}  // namespace caad
