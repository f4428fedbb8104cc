#include "caad/gradcheck.hpp"

#include <cmath>

#include "caad/losses.hpp"
#include "caad/model.hpp"
#include "caad/rng.hpp"

namespace caad {

Scene make_fixture_scene(int n_agents, std::uint64_t seed) {
  Rng rng(seed);
  Scene s;
  s.scene_id = "fixture-" + std::to_string(seed);
  s.seed = seed;
  s.tag = ScenarioTag::free_flow;
  const double w = 3.5;
  s.drivable = DrivablePolygon{{{-40.0, -1.5 * w}, {90.0, -1.5 * w}, {90.0, 1.5 * w}, {-40.0, 1.5 * w}}};
  s.centerlines = {Polyline{{{-40.0, 0.0}, {90.0, 0.0}}}, Polyline{{{-40.0, w}, {90.0, w}}}};

  auto make_entity = [&](int id, Vec2 start, double heading, double speed, double lat_drift) {
    AgentState a;
    a.id = id;
    a.footprint = {4.5, 1.9};
    const Vec2 dir{std::cos(heading), std::sin(heading)};
    for (int k = 0; k < kHistorySteps; ++k) {
      const double t = (k - (kHistorySteps - 1)) * kDt;
      a.history.push_back({start.x + dir.x * speed * t, start.y + dir.y * speed * t, heading});
    }
    for (int k = 1; k <= kFutureSteps; ++k) {
      const double t = k * kDt;
      a.gt_future.push_back(
          {start.x + dir.x * speed * t, start.y + dir.y * speed * t + lat_drift * t, heading});
    }
    a.gt_valid.assign(kFutureSteps, true);
    return a;
  };
  s.ego = make_entity(0, {0.0, 0.0}, 0.0, 6.0, 0.0);
  for (int i = 0; i < n_agents; ++i) {
    const double lane = (i % 2 == 0) ? w : 0.0;
    const double x0 = (i % 2 == 0) ? -4.0 + 7.0 * i : 14.0 + 6.0 * i;
    const double drift = (i == 0) ? -0.35 : 0.0;  // one agent drifts toward the ego lane
    s.agents.push_back(make_entity(i + 1, {x0, lane}, 0.0, rng.uniform(4.0, 7.0), drift));
  }
  s.route.pts.clear();
  for (const Pose2& p : s.ego.gt_future)
    if (s.route.pts.empty() || geo::dist(s.route.pts.back(), p.position()) > 1e-6)
      s.route.pts.push_back(p.position());
  s.route.pts.insert(s.route.pts.begin(), s.ego.current().position());
  validate_scene(s);
  return s;
}

GradCheckResult run_gradcheck(std::uint64_t seed, double fd_step) {
  ModelConfig cfg;
  cfg.embed_dim = 8;
  cfg.heads = 2;
  cfg.ffn_mult = 2;
  cfg.joint_modes = 2;
  cfg.marginal_modes = 2;
  CaadModel model(cfg, seed);
  const Scene world = make_fixture_scene(3, seed);
  const Scene scene = ego_frame_transform(world);
  const SceneTargets targets = make_targets(scene);
  LossWeights weights;

  // freeze the discrete selections at the base point
  std::vector<int> k_star;
  InteractionSet interaction;
  ModeAssignment assign;
  {
    const ModelOutput out = model.forward(scene);
    const MarginalPredictionSet marginal = out.to_marginal_set(cfg.marginal_modes, cfg.t_fut);
    k_star = best_marginal_modes(marginal, scene);
    interaction = select_interaction_set(scene, marginal, selection_path(scene, SelectionCue::spatial),
                                         0.25);
    assign = assign_modes(out.to_hypotheses(cfg.t_fut), targets.ego_tp_traj, marginal, scene,
                          interaction, AssignStrategy::ego_centric);
  }

  auto loss_graph = [&](const ModelOutput& out) {
    ad::Tensor l = e2e_loss(out, targets, k_star, weights);
    l = ad::add(l, joint_reg_loss(out, assign, interaction, targets, cfg.t_fut));
    l = ad::add(l, joint_cls_loss(out, assign, interaction, weights));
    return l;
  };
  auto loss_value = [&]() { return loss_graph(model.forward(scene)).item(); };

  // analytic gradients
  model.params().zero_grads();
  {
    ad::Tape tape;
    loss_graph(model.forward(scene)).backward();
  }

  GradCheckResult res;
  for (const std::string& name : model.params().names()) {
    nn::Tensor p = model.params().get(name);
    for (std::size_t i = 0; i < p.values().size(); ++i) {
      const double saved = p.values()[i];
      p.values()[i] = saved + fd_step;
      const double up = loss_value();
      p.values()[i] = saved - fd_step;
      const double down = loss_value();
      p.values()[i] = saved;
      const double fd = (up - down) / (2.0 * fd_step);
      const double analytic = p.grad()[i];
      const double rel = std::abs(analytic - fd) / std::max(std::abs(fd), 1e-3);
      ++res.params_checked;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = name + "[" + std::to_string(i) + "]";
        res.analytic_at_worst = analytic;
        res.fd_at_worst = fd;
      }
    }
  }
  return res;
}

}  // namespace caad
