#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "caad/checkpoint.hpp"
#include "caad/grpo.hpp"
#include "caad/losses.hpp"
#include "caad/model.hpp"
#include "caad/reward.hpp"
#include "caad/scene.hpp"

namespace caad {

struct StageEpochs {
  int stage1 = 10;  // marginal warm-up, e2e only
  int stage2 = 20;  // adds the joint terms
  int stage3 = 10;  // adds the GRPO term at reduced learning rate
};

struct TrainConfig {
  ModelConfig model;
  LossWeights weights;
  GrpoConfig grpo;
  RewardConfig reward;
  StageEpochs epochs;
  double lr_stage1 = 1e-3;
  double lr_stage2 = 1e-3;
  double lr_stage3 = 1e-4;
  double weight_decay = 0.01;
  int batch_size = 16;
  std::uint64_t seed = 1;
  AssignStrategy assignment = AssignStrategy::ego_centric;
  SelectionCue cue = SelectionCue::spatial;
  double selection_margin = 0.25;
  std::string scene_file;
  std::string out_dir = ".";

  std::string serialize() const;
  static TrainConfig deserialize(const std::string& text);
  static TrainConfig load(const std::string& path);
};

struct EpochMetrics {
  int epoch = 0;  // 1-based, global across stages
  int stage = 1;
  LossReport loss;
  double mean_group_reward = 0.0;
  double collision_truncation_rate = 0.0;
  double ego_min_ade = 0.0;
  double interaction_set_size_mean = 0.0;
};

std::string metrics_csv(const std::vector<EpochMetrics>& rows);

// Adaptive-moment descent with bias correction and decoupled weight decay.
struct AdamW {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::map<std::string, std::vector<double>> m, v;

  // Applies one update from the accumulated gradients, scaled by grad_scale.
  // Frozen parameters are skipped entirely (no moment update, no decay).
  void step(nn::ParamStore& ps, double lr, double weight_decay, double grad_scale,
            const std::set<std::string>& frozen = {});
};

struct TrainResult {
  std::vector<EpochMetrics> metrics;
  std::string checkpoint_path;
  std::string metrics_path;
  bool aborted = false;
};

// Three-stage training over the given scenes. Identical config + seed (and
// identical scenes) reproduce byte-identical metrics. `resume_from` continues
// a run from a trainer checkpoint; epochs already recorded there are skipped.
TrainResult train(const TrainConfig& cfg, const std::vector<Scene>& scenes,
                  const std::string& resume_from = "");

void save_train_checkpoint(const std::string& path, const CaadModel& model, const AdamW& opt,
                           int stage, int epoch_done);
struct LoadedTrainState {
  ModelConfig model_config;
  Checkpoint checkpoint;
  int stage = 1;
  int epoch_done = 0;
};
LoadedTrainState load_train_state(const std::string& path);
void restore_opt(const Checkpoint& ck, AdamW& opt);

// Rebuilds a model (architecture from the stored config) with its parameters.
CaadModel model_from_checkpoint(const std::string& path);

// Per-scene supervised loss assembly shared by the trainer and the tests.
struct SceneLossBreakdown {
  ad::Tensor total;
  double e2e = 0.0, joint_reg = 0.0, joint_cls = 0.0, grpo = 0.0;
  double min_ade = 0.0;
  int interaction_size = 0;
  AlignStats align;
};
SceneLossBreakdown scene_loss(const CaadModel& model, const Scene& world_scene, int stage,
                              const TrainConfig& cfg, Rng grpo_rng);

}  // namespace caad
