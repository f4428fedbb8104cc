#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "caad/simulator.hpp"
#include "caad/trainer.hpp"

namespace caad {

// Desk-scale analogs of the compact ablation grid:
//   base - marginal prediction only
//   A    - marginal prediction plus policy alignment on the marginal ego head
//   B    - temporal selection cue, joint prediction, ego-centric assignment
//   C    - spatial cue, joint prediction, all-actor assignment
//   D    - spatial cue, joint prediction, ego-centric assignment
//   E    - D plus causality-aware policy alignment
enum class AblationGrid { base, A, B, C, D, E };

AblationGrid grid_from_string(const std::string& s);
std::string to_string(AblationGrid g);

struct AblationConfig {
  int train_scenes = 400;
  int eval_scenes = 100;
  std::uint64_t data_seed = 9000;
  std::vector<std::uint64_t> model_seeds = {1, 2, 3};
  std::string out_dir = ".";
  int horizon_steps = kDefaultHorizonSteps;
  // desk-scale schedule shared by every grid entry; base/A fold the joint
  // stage into stage 1 so total supervised epochs match
  int stage1 = 2;
  int stage2 = 6;
  int stage3 = 3;
  int embed_dim = 32;
  int batch_size = 16;
};

// Training configuration for one grid entry (scene_file/out_dir left empty).
TrainConfig grid_train_config(AblationGrid grid, const AblationConfig& cfg,
                              std::uint64_t model_seed);

struct AblationRun {
  std::uint64_t model_seed = 0;
  EvalSummary summary;
  std::string checkpoint;
};

struct AblationResult {
  AblationGrid grid = AblationGrid::base;
  std::vector<AblationRun> runs;
  double median_success_rate = 0.0;
  double median_driving_score = 0.0;
};

// Trains and evaluates one grid entry across the configured model seeds.
// Scenes are shared across grids through (data_seed, counts). When
// `resume_map` has an entry for a seed, stages already covered by that
// checkpoint are reused (E resumes from D).
AblationResult run_ablation(AblationGrid grid, const AblationConfig& cfg,
                            const std::vector<Scene>& train_scenes,
                            const std::vector<Scene>& eval_scenes,
                            const std::vector<std::string>& resume_checkpoints = {});

struct AblationSuite {
  std::vector<AblationResult> results;
};

// Runs several grid entries with shared data; D's checkpoints seed E.
AblationSuite run_ablation_suite(const std::vector<AblationGrid>& grids,
                                 const AblationConfig& cfg);

std::vector<Scene> ablation_train_scenes(const AblationConfig& cfg);
std::vector<Scene> ablation_eval_scenes(const AblationConfig& cfg);

double median(std::vector<double> xs);

}  // namespace caad
