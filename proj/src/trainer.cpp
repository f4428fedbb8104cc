#include "caad/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "caad/scene_io.hpp"

namespace caad {

using ad::Tensor;

std::string TrainConfig::serialize() const {
  std::ostringstream os;
  os << "# caad train config v1\n";
  std::istringstream ms(model.serialize());
  std::string line;
  while (std::getline(ms, line)) os << "model." << line << "\n";
  os << "weights.lambda_joint=" << format_double(weights.lambda_joint) << "\n"
     << "weights.lambda_rl=" << format_double(weights.lambda_rl) << "\n"
     << "weights.focal_gamma=" << format_double(weights.focal_gamma) << "\n"
     << "weights.focal_alpha=" << format_double(weights.focal_alpha) << "\n"
     << "grpo.group_size=" << grpo.group_size << "\n"
     << "grpo.clip_eps=" << format_double(grpo.clip_eps) << "\n"
     << "grpo.eps_std=" << format_double(grpo.eps_std) << "\n"
     << "grpo.scope=" << (grpo.scope == AlignScope::ego ? "ego" : "all_agents") << "\n"
     << "epochs.stage1=" << epochs.stage1 << "\n"
     << "epochs.stage2=" << epochs.stage2 << "\n"
     << "epochs.stage3=" << epochs.stage3 << "\n"
     << "lr.stage1=" << format_double(lr_stage1) << "\n"
     << "lr.stage2=" << format_double(lr_stage2) << "\n"
     << "lr.stage3=" << format_double(lr_stage3) << "\n"
     << "weight_decay=" << format_double(weight_decay) << "\n"
     << "batch_size=" << batch_size << "\n"
     << "seed=" << seed << "\n"
     << "assignment=" << (assignment == AssignStrategy::ego_centric ? "ego_centric" : "all_actor")
     << "\n"
     << "cue=" << (cue == SelectionCue::spatial ? "spatial" : "temporal") << "\n"
     << "selection_margin=" << format_double(selection_margin) << "\n"
     << "scene_file=" << scene_file << "\n"
     << "out_dir=" << out_dir << "\n";
  return os.str();
}

TrainConfig TrainConfig::deserialize(const std::string& text) {
  TrainConfig c;
  std::string model_text;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("train config: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key.rfind("model.", 0) == 0) {
      model_text += key.substr(6) + "=" + val + "\n";
    } else if (key == "weights.lambda_joint") c.weights.lambda_joint = std::stod(val);
    else if (key == "weights.lambda_rl") c.weights.lambda_rl = std::stod(val);
    else if (key == "weights.focal_gamma") c.weights.focal_gamma = std::stod(val);
    else if (key == "weights.focal_alpha") c.weights.focal_alpha = std::stod(val);
    else if (key == "grpo.group_size") c.grpo.group_size = std::stoi(val);
    else if (key == "grpo.clip_eps") c.grpo.clip_eps = std::stod(val);
    else if (key == "grpo.eps_std") c.grpo.eps_std = std::stod(val);
    else if (key == "grpo.scope") c.grpo.scope = val == "all_agents" ? AlignScope::all_agents : AlignScope::ego;
    else if (key == "epochs.stage1") c.epochs.stage1 = std::stoi(val);
    else if (key == "epochs.stage2") c.epochs.stage2 = std::stoi(val);
    else if (key == "epochs.stage3") c.epochs.stage3 = std::stoi(val);
    else if (key == "lr.stage1") c.lr_stage1 = std::stod(val);
    else if (key == "lr.stage2") c.lr_stage2 = std::stod(val);
    else if (key == "lr.stage3") c.lr_stage3 = std::stod(val);
    else if (key == "weight_decay") c.weight_decay = std::stod(val);
    else if (key == "batch_size") c.batch_size = std::stoi(val);
    else if (key == "seed") c.seed = std::stoull(val);
    else if (key == "assignment") c.assignment = val == "all_actor" ? AssignStrategy::all_actor : AssignStrategy::ego_centric;
    else if (key == "cue") c.cue = val == "temporal" ? SelectionCue::temporal : SelectionCue::spatial;
    else if (key == "selection_margin") c.selection_margin = std::stod(val);
    else if (key == "scene_file") c.scene_file = val;
    else if (key == "out_dir") c.out_dir = val;
    else throw std::runtime_error("train config: unknown key '" + key + "'");
  }
  c.model = ModelConfig::deserialize(model_text);
  return c;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("train config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

std::string metrics_csv(const std::vector<EpochMetrics>& rows) {
  std::string out =
      "epoch,stage,e2e,joint_reg,joint_cls,grpo,total,mean_group_reward,"
      "collision_truncation_rate,ego_min_ade,interaction_set_size_mean\n";
  for (const EpochMetrics& r : rows) {
    out += std::to_string(r.epoch) + "," + std::to_string(r.stage) + "," +
           format_double(r.loss.e2e) + "," + format_double(r.loss.joint_reg) + "," +
           format_double(r.loss.joint_cls) + "," + format_double(r.loss.grpo) + "," +
           format_double(r.loss.total) + "," + format_double(r.mean_group_reward) + "," +
           format_double(r.collision_truncation_rate) + "," + format_double(r.ego_min_ade) + "," +
           format_double(r.interaction_set_size_mean) + "\n";
  }
  return out;
}

void AdamW::step(nn::ParamStore& ps, double lr, double weight_decay, double grad_scale,
                 const std::set<std::string>& frozen) {
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (const std::string& name : ps.names()) {
    if (frozen.count(name)) continue;
    nn::Tensor p = ps.get(name);
    const std::size_t n = p.values().size();
    auto& mi = m[name];
    auto& vi = v[name];
    if (mi.size() != n) mi.assign(n, 0.0);
    if (vi.size() != n) vi.assign(n, 0.0);
    const std::vector<double>& g = p.grad();
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = g[i] * grad_scale;
      mi[i] = beta1 * mi[i] + (1.0 - beta1) * gi;
      vi[i] = beta2 * vi[i] + (1.0 - beta2) * gi * gi;
      const double mh = mi[i] / bc1;
      const double vh = vi[i] / bc2;
      p.values()[i] -= lr * mh / (std::sqrt(vh) + eps);
      p.values()[i] -= lr * weight_decay * p.values()[i];
    }
  }
}

SceneLossBreakdown scene_loss(const CaadModel& model, const Scene& world_scene, int stage,
                              const TrainConfig& cfg, Rng grpo_rng) {
  const ModelConfig& mc = model.config();
  SceneLossBreakdown out;
  const FrameTransform frame = ego_frame_of(world_scene);
  const Scene ego_scene = ego_frame_transform(world_scene);
  const ModelOutput mo = model.forward(ego_scene);
  const SceneTargets targets = make_targets(ego_scene);
  const MarginalPredictionSet marginal = mo.to_marginal_set(mc.marginal_modes, mc.t_fut);
  const std::vector<int> k_star = best_marginal_modes(marginal, ego_scene);

  LossWeights w = cfg.weights;
  if (stage < 2 || !mc.joint_branch) w.lambda_joint = 0.0;
  if (stage < 3) w.lambda_rl = 0.0;

  Tensor e2e = e2e_loss(mo, targets, k_star, cfg.weights);
  out.e2e = e2e.item();
  out.min_ade = masked_distance(mo.ego_plan_tp(), targets.ego_tp_traj,
                                std::vector<bool>(targets.ego_tp_traj.points.size(), true));

  Tensor joint_reg = Tensor::scalar(0.0);
  Tensor joint_cls = Tensor::scalar(0.0);
  if (w.lambda_joint != 0.0) {
    const Polyline sel_path = selection_path(ego_scene, cfg.cue);
    const InteractionSet interaction =
        select_interaction_set(ego_scene, marginal, sel_path, cfg.selection_margin);
    out.interaction_size = static_cast<int>(interaction.members.size());
    const std::vector<SceneHypothesis> hyps = mo.to_hypotheses(mc.t_fut);
    const ModeAssignment assign =
        assign_modes(hyps, targets.ego_tp_traj, marginal, ego_scene, interaction, cfg.assignment);
    joint_reg = joint_reg_loss(mo, assign, interaction, targets, mc.t_fut);
    joint_cls = joint_cls_loss(mo, assign, interaction, cfg.weights);
    out.joint_reg = joint_reg.item();
    out.joint_cls = joint_cls.item();
    for (const SceneHypothesis& h : hyps) {
      const double d = masked_distance(h.ego_traj, targets.ego_tp_traj,
                                       std::vector<bool>(targets.ego_tp_traj.points.size(), true));
      out.min_ade = std::min(out.min_ade, d);
    }
  }

  Tensor grpo_term = Tensor::scalar(0.0);
  if (w.lambda_rl != 0.0) {
    grpo_term = align_scene_loss(mo, world_scene, frame, cfg.grpo, cfg.reward, grpo_rng, &out.align);
    out.grpo = grpo_term.item();
  }

  out.total = total_loss(e2e, joint_reg, joint_cls, grpo_term, w);
  return out;
}

void save_train_checkpoint(const std::string& path, const CaadModel& model, const AdamW& opt,
                           int stage, int epoch_done) {
  Checkpoint ck;
  store_params(ck, model.params());
  for (const auto& [name, mv] : opt.m) ck.put("opt/m/" + name, {static_cast<int>(mv.size())}, mv);
  for (const auto& [name, vv] : opt.v) ck.put("opt/v/" + name, {static_cast<int>(vv.size())}, vv);
  ck.put("_meta", {3},
         {static_cast<double>(stage), static_cast<double>(epoch_done), static_cast<double>(opt.t)});
  ck.put_string("_config", model.config().serialize());
  ck.save(path);
}

LoadedTrainState load_train_state(const std::string& path) {
  LoadedTrainState st;
  st.checkpoint = Checkpoint::load(path);
  const auto cfg_it = st.checkpoint.strings.find("_config");
  if (cfg_it == st.checkpoint.strings.end())
    throw std::runtime_error("checkpoint: missing _config block in '" + path + "'");
  st.model_config = ModelConfig::deserialize(cfg_it->second);
  const auto meta_it = st.checkpoint.arrays.find("_meta");
  if (meta_it == st.checkpoint.arrays.end() || meta_it->second.data.size() != 3)
    throw std::runtime_error("checkpoint: missing _meta block in '" + path + "'");
  st.stage = static_cast<int>(meta_it->second.data[0]);
  st.epoch_done = static_cast<int>(meta_it->second.data[1]);
  return st;
}

void restore_opt(const Checkpoint& ck, AdamW& opt) {
  const auto meta_it = ck.arrays.find("_meta");
  if (meta_it != ck.arrays.end()) opt.t = static_cast<std::int64_t>(meta_it->second.data[2]);
  for (const auto& [name, block] : ck.arrays) {
    if (name.rfind("opt/m/", 0) == 0) opt.m[name.substr(6)] = block.data;
    if (name.rfind("opt/v/", 0) == 0) opt.v[name.substr(6)] = block.data;
  }
}

CaadModel model_from_checkpoint(const std::string& path) {
  LoadedTrainState st = load_train_state(path);
  CaadModel model(st.model_config, 0);
  bind_params(st.checkpoint, model.params());
  return model;
}

TrainResult train(const TrainConfig& cfg, const std::vector<Scene>& scenes,
                  const std::string& resume_from) {
  if (scenes.empty()) throw std::invalid_argument("train: no scenes");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be positive");
  Rng root(cfg.seed);
  CaadModel model(cfg.model, root.split("init").next_u64());
  AdamW opt;
  int resume_stage = 0, resume_epoch = 0;
  if (!resume_from.empty()) {
    LoadedTrainState st = load_train_state(resume_from);
    if (st.model_config.serialize() != cfg.model.serialize())
      throw std::runtime_error("train: checkpoint model config does not match");
    bind_params(st.checkpoint, model.params());
    restore_opt(st.checkpoint, opt);
    resume_stage = st.stage;
    resume_epoch = st.epoch_done;
  }

  std::set<std::string> agent_head;
  for (const std::string& name : model.params().names())
    if (model.is_agent_joint_head_param(name)) agent_head.insert(name);

  TrainResult result;
  result.checkpoint_path = cfg.out_dir + "/checkpoint.ckpt";
  result.metrics_path = cfg.out_dir + "/metrics.csv";

  const int stage_epochs[3] = {cfg.epochs.stage1, cfg.epochs.stage2, cfg.epochs.stage3};
  const double stage_lr[3] = {cfg.lr_stage1, cfg.lr_stage2, cfg.lr_stage3};
  int global_epoch = 0;
  bool saved_any = false;

  for (int stage = 1; stage <= 3 && !result.aborted; ++stage) {
    // Supervision partition: ego-scope alignment leaves the agent joint head
    // bit-untouched for the whole stage.
    const bool freeze_agents =
        stage == 3 && cfg.grpo.scope == AlignScope::ego && cfg.model.joint_branch;
    const std::set<std::string> frozen = freeze_agents ? agent_head : std::set<std::string>{};
    for (int e = 0; e < stage_epochs[stage - 1] && !result.aborted; ++e) {
      ++global_epoch;
      const bool already_done =
          stage < resume_stage || (stage == resume_stage && e < resume_epoch);
      if (already_done) continue;

      // deterministic shuffle keyed by (stage, epoch)
      std::vector<int> order(scenes.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      Rng shuffle_rng = root.split("shuffle", static_cast<std::uint64_t>(stage),
                                   static_cast<std::uint64_t>(e));
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.uniform_int(static_cast<int>(i)))]);

      EpochMetrics row;
      row.epoch = global_epoch;
      row.stage = stage;
      double sum_e2e = 0, sum_jr = 0, sum_jc = 0, sum_grpo = 0;
      double sum_reward = 0, sum_trunc = 0, sum_ade = 0, sum_int = 0;
      int reward_scenes = 0;
      bool finite = true;

      for (std::size_t pos = 0; pos < order.size() && finite; pos += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t end = std::min(order.size(), pos + static_cast<std::size_t>(cfg.batch_size));
        model.params().zero_grads();
        for (std::size_t bi = pos; bi < end; ++bi) {
          const int scene_idx = order[bi];
          ad::Tape tape;
          SceneLossBreakdown lb =
              scene_loss(model, scenes[static_cast<std::size_t>(scene_idx)], stage, cfg,
                         root.split("grpo", static_cast<std::uint64_t>(stage),
                                    static_cast<std::uint64_t>(e), static_cast<std::uint64_t>(scene_idx)));
          if (!std::isfinite(lb.total.item())) {
            finite = false;
            break;
          }
          lb.total.backward();
          sum_e2e += lb.e2e;
          sum_jr += lb.joint_reg;
          sum_jc += lb.joint_cls;
          sum_ade += lb.min_ade;
          sum_int += lb.interaction_size;
          if (stage == 3 && cfg.weights.lambda_rl != 0.0) {
            sum_grpo += lb.grpo;
            sum_reward += lb.align.mean_reward;
            sum_trunc += lb.align.collided_fraction;
            ++reward_scenes;
          }
        }
        if (!finite) break;
        opt.step(model.params(), stage_lr[stage - 1], cfg.weight_decay,
                 1.0 / static_cast<double>(end - pos), frozen);
      }

      if (!finite) {
        result.aborted = true;  // last-good checkpoint stays on disk
        break;
      }
      const double n = static_cast<double>(scenes.size());
      LossWeights w = cfg.weights;
      if (stage < 2 || !cfg.model.joint_branch) w.lambda_joint = 0.0;
      if (stage < 3) w.lambda_rl = 0.0;
      row.loss = make_report(sum_e2e / n, sum_jr / n, sum_jc / n, sum_grpo / n, w);
      row.mean_group_reward = reward_scenes ? sum_reward / reward_scenes : 0.0;
      row.collision_truncation_rate = reward_scenes ? sum_trunc / reward_scenes : 0.0;
      row.ego_min_ade = sum_ade / n;
      row.interaction_set_size_mean = sum_int / n;
      result.metrics.push_back(row);
      save_train_checkpoint(result.checkpoint_path, model, opt, stage, e + 1);
      saved_any = true;
    }
  }

  if (!saved_any && !result.aborted) {
    // zero-epoch run: persist the initial state
    save_train_checkpoint(result.checkpoint_path, model, opt, 1, 0);
  }
  std::ofstream mf(result.metrics_path, std::ios::binary);
  if (!mf) throw std::runtime_error("train: cannot write metrics to '" + result.metrics_path + "'");
  mf << metrics_csv(result.metrics);
  return result;
}

}  // namespace caad
