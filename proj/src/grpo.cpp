#include "caad/grpo.hpp"

#include <cmath>
#include <stdexcept>

namespace caad {

using ad::Tensor;

namespace {
constexpr double kLog2Pi = 1.8378770664093453;
}

RolloutGroup sample_group(const SceneHypothesis& hyp, int group_size, Rng& rng) {
  if (group_size < 2) throw std::invalid_argument("sample_group: group size must be >= 2");
  RolloutGroup g;
  g.mode = hyp.mode_index;
  std::vector<double> mu;
  for (const Vec2& p : hyp.ego_traj.points) {
    mu.push_back(p.x);
    mu.push_back(p.y);
  }
  const std::vector<double>& sigma = hyp.ego_sigma;
  for (int i = 0; i < group_size; ++i) {
    std::vector<double> sample(mu.size());
    for (std::size_t e = 0; e < mu.size(); ++e) sample[e] = mu[e] + sigma[e] * rng.normal();
    g.old_logp.push_back(gaussian_logp_plain(mu, sigma, sample));
    g.rollouts.push_back(std::move(sample));
  }
  return g;
}

std::pair<std::vector<double>, std::vector<double>> compute_advantages(
    const std::vector<double>& rewards, const std::vector<bool>& collided, double eps_std) {
  const std::size_t n = rewards.size();
  if (n < 2) throw std::invalid_argument("compute_advantages: need at least 2 rollouts");
  if (collided.size() != n)
    throw std::invalid_argument("compute_advantages: collided flags do not match rewards");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(n);  // population convention
  const double denom = std::max(std::sqrt(var), eps_std);
  std::vector<double> a(n), trunc(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = (rewards[i] - mean) / denom;
    trunc[i] = collided[i] ? -1.0 : std::max(0.0, a[i]);
  }
  return {std::move(a), std::move(trunc)};
}

void compute_advantages(RolloutGroup& group, double eps_std) {
  auto [a, t] = compute_advantages(group.rewards, group.collided, eps_std);
  group.advantages = std::move(a);
  group.truncated = std::move(t);
}

double gaussian_logp_plain(const std::vector<double>& mu, const std::vector<double>& sigma,
                           const std::vector<double>& x) {
  // mirrors the graph computation in gaussian_logp() operation for operation
  double sum_z2 = 0.0;
  for (std::size_t e = 0; e < mu.size(); ++e) {
    const double z = (x[e] - mu[e]) / sigma[e];
    sum_z2 += z * z;
  }
  double sum_log_sigma = 0.0;
  for (double s : sigma) sum_log_sigma += std::log(s);
  const int d = static_cast<int>(mu.size());
  double t = sum_z2 * -0.5;
  t = t + -(0.5 * d) * kLog2Pi;
  t = t - sum_log_sigma;
  return t;
}

Tensor gaussian_logp(const Tensor& mu, const Tensor& sigma,
                     const std::vector<std::vector<double>>& samples) {
  const int g = static_cast<int>(samples.size());
  const int d = static_cast<int>(mu.size());
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(g) * d);
  for (const auto& s : samples) flat.insert(flat.end(), s.begin(), s.end());
  Tensor x = Tensor::from({g, d}, std::move(flat));
  Tensor diff = ad::add_rowvec(x, ad::neg(mu));           // x - mu per row
  Tensor z = ad::div_rowvec(diff, sigma);
  Tensor sum_z2 = ad::sum_rows(ad::mul(z, z));            // [G]
  Tensor sum_log_sigma = ad::sum(ad::log(sigma));         // [1]
  Tensor t = ad::add_scalar(ad::mul_scalar(sum_z2, -0.5), -(0.5 * d) * kLog2Pi);
  Tensor rep = ad::reshape(ad::matmul(Tensor::full({g, 1}, 1.0), ad::reshape(sum_log_sigma, {1, 1})),
                           {g});
  return ad::sub(t, rep);
}

Tensor grpo_loss(const std::vector<RolloutGroup>& groups, const std::vector<Tensor>& mu_per_mode,
                 const std::vector<Tensor>& sigma_per_mode, double clip_eps) {
  if (groups.empty()) throw std::invalid_argument("grpo_loss: no rollout groups");
  Tensor total;
  int count = 0;
  for (const RolloutGroup& g : groups) {
    const std::size_t m = static_cast<std::size_t>(g.mode);
    Tensor logp = gaussian_logp(mu_per_mode[m], sigma_per_mode[m], g.rollouts);
    Tensor old_lp = Tensor::from({static_cast<int>(g.old_logp.size())}, g.old_logp);
    Tensor ratio = ad::exp(ad::sub(logp, old_lp));
    for (std::size_t i = 0; i < ratio.values().size(); ++i)
      if (!std::isfinite(ratio.values()[i]))
        throw std::domain_error("grpo_loss: non-finite ratio at mode " + std::to_string(g.mode) +
                                ", rollout " + std::to_string(i));
    Tensor adv = Tensor::from({static_cast<int>(g.truncated.size())}, g.truncated);
    Tensor unclipped = ad::mul(ratio, adv);
    Tensor clipped = ad::mul(ad::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps), adv);
    Tensor obj = ad::sum(ad::min_elem(unclipped, clipped));
    total = total.defined() ? ad::add(total, obj) : obj;
    count += static_cast<int>(g.rollouts.size());
  }
  return ad::mul_scalar(total, -1.0 / count);
}

namespace {

// Reward for one agent rollout in the all-agent ablation: discrete
// no-collision against every other entity's GT track times the comfort score.
std::pair<double, bool> score_agent_rollout(const TrajectoryTP& rollout, std::size_t agent_index,
                                            const Scene& scene, const RewardConfig& reward_cfg) {
  const AgentState& self = scene.agents[agent_index];
  Scene swapped = scene;
  swapped.ego = self;
  swapped.agents.erase(swapped.agents.begin() + static_cast<std::ptrdiff_t>(agent_index));
  AgentState ego_as_agent = scene.ego;
  swapped.agents.push_back(ego_as_agent);
  const NcResult nc = score_nc(rollout, swapped, reward_cfg);
  const double comfort = score_comfort(rollout, self.current(), reward_cfg);
  return {(nc.at_fault ? 0.0 : 1.0) * comfort, nc.collided};
}

}  // namespace

Tensor align_scene_loss(const ModelOutput& out, const Scene& world_scene,
                        const FrameTransform& frame, const GrpoConfig& cfg,
                        const RewardConfig& reward_cfg, Rng& rng, AlignStats* stats) {
  if (!out.has_joint && out.ego_mode_mu.empty() && !out.ego_tp_mu.defined())
    throw std::logic_error("align_scene_loss: model output has no policy head");

  const int t_fut = static_cast<int>(world_scene.ego.gt_future.size());
  std::vector<RolloutGroup> groups;
  std::vector<Tensor> mu_modes, sigma_modes;

  // Joint scope samples per mode; a model without the joint branch aligns the
  // marginal ego policy as a single mode.
  std::vector<SceneHypothesis> hyps = out.to_hypotheses(t_fut);
  if (hyps.empty()) {
    SceneHypothesis h;
    h.mode_index = 0;
    h.ego_traj = out.ego_plan_tp();
    h.ego_sigma = out.ego_tp_sigma.values();
    hyps.push_back(std::move(h));
    mu_modes.push_back(out.ego_tp_mu);
    sigma_modes.push_back(out.ego_tp_sigma);
  } else {
    mu_modes = out.ego_mode_mu;
    sigma_modes = out.ego_mode_sigma;
  }

  double reward_sum = 0.0;
  int reward_n = 0, collided_n = 0, dropped = 0, skipped = 0;
  for (std::size_t m = 0; m < hyps.size(); ++m) {
    RolloutGroup g = sample_group(hyps[m], cfg.group_size, rng);
    RolloutGroup kept;
    kept.mode = g.mode;
    for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
      TrajectoryTP world_traj;
      for (int k = 0; k < t_fut; ++k)
        world_traj.points.push_back(frame.to_world(
            Vec2{g.rollouts[i][static_cast<std::size_t>(2 * k)], g.rollouts[i][static_cast<std::size_t>(2 * k + 1)]}));
      try {
        const RewardBreakdown b = score_rollout(world_traj, world_scene, reward_cfg);
        kept.rollouts.push_back(g.rollouts[i]);
        kept.old_logp.push_back(g.old_logp[i]);
        kept.rewards.push_back(b.reward);
        kept.collided.push_back(b.collided);
        reward_sum += b.reward;
        ++reward_n;
        if (b.collided) ++collided_n;
      } catch (const std::domain_error&) {
        ++dropped;  // degenerate sample, excluded from the group
      }
    }
    if (static_cast<int>(kept.rollouts.size()) < 2) {
      ++skipped;
      continue;
    }
    compute_advantages(kept, cfg.eps_std);
    groups.push_back(std::move(kept));
  }

  if (stats) {
    stats->mean_reward = reward_n > 0 ? reward_sum / reward_n : 0.0;
    stats->collided_fraction = reward_n > 0 ? static_cast<double>(collided_n) / reward_n : 0.0;
    stats->rollouts = reward_n;
    stats->dropped = dropped;
    stats->groups_skipped = skipped;
  }

  Tensor loss =
      groups.empty() ? Tensor::scalar(0.0) : grpo_loss(groups, mu_modes, sigma_modes, cfg.clip_eps);

  if (cfg.scope == AlignScope::all_agents && out.has_joint) {
    // ablation: sample and align each agent's joint trajectory as well, with
    // a fixed sampling sigma
    std::vector<RolloutGroup> agent_groups;
    std::vector<Tensor> agent_mu, agent_sigma;
    for (int i = 0; i < out.n_agents; ++i) {
      for (std::size_t m = 0; m < hyps.size(); ++m) {
        SceneHypothesis ah;
        ah.mode_index = static_cast<int>(agent_mu.size());
        ah.ego_traj = hyps[m].agent_trajs[static_cast<std::size_t>(i)];
        ah.ego_sigma.assign(static_cast<std::size_t>(t_fut) * 2, cfg.agent_rollout_sigma);
        RolloutGroup g = sample_group(ah, cfg.group_size, rng);
        bool ok = true;
        for (std::size_t r = 0; r < g.rollouts.size(); ++r) {
          TrajectoryTP world_traj;
          for (int k = 0; k < t_fut; ++k)
            world_traj.points.push_back(frame.to_world(Vec2{
                g.rollouts[r][static_cast<std::size_t>(2 * k)], g.rollouts[r][static_cast<std::size_t>(2 * k + 1)]}));
          try {
            auto [rew, col] = score_agent_rollout(world_traj, static_cast<std::size_t>(i),
                                                  world_scene, reward_cfg);
            g.rewards.push_back(rew);
            g.collided.push_back(col);
          } catch (const std::exception&) {
            ok = false;
            break;
          }
        }
        if (!ok) continue;
        compute_advantages(g, cfg.eps_std);
        agent_groups.push_back(std::move(g));
        agent_mu.push_back(out.agent_mode_traj[m][static_cast<std::size_t>(i)]);
        agent_sigma.push_back(
            Tensor::full({t_fut * 2}, cfg.agent_rollout_sigma));
      }
    }
    if (!agent_groups.empty())
      loss = ad::add(loss, grpo_loss(agent_groups, agent_mu, agent_sigma, cfg.clip_eps));
  }
  return loss;
}

}  // namespace caad
