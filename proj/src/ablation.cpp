#include "caad/ablation.hpp"

#include <algorithm>
#include <filesystem>
#include <stdexcept>

#include "caad/scene_gen.hpp"

namespace caad {

AblationGrid grid_from_string(const std::string& s) {
  if (s == "base") return AblationGrid::base;
  if (s == "A") return AblationGrid::A;
  if (s == "B") return AblationGrid::B;
  if (s == "C") return AblationGrid::C;
  if (s == "D") return AblationGrid::D;
  if (s == "E") return AblationGrid::E;
  throw std::invalid_argument("unknown ablation grid '" + s + "' (expected base|A|B|C|D|E)");
}

std::string to_string(AblationGrid g) {
  switch (g) {
    case AblationGrid::base: return "base";
    case AblationGrid::A: return "A";
    case AblationGrid::B: return "B";
    case AblationGrid::C: return "C";
    case AblationGrid::D: return "D";
    case AblationGrid::E: return "E";
  }
  throw std::logic_error("bad AblationGrid");
}

TrainConfig grid_train_config(AblationGrid grid, const AblationConfig& cfg,
                              std::uint64_t model_seed) {
  TrainConfig t;
  t.model.embed_dim = cfg.embed_dim;
  t.batch_size = cfg.batch_size;
  t.seed = model_seed;
  t.lr_stage1 = 1e-3;
  t.lr_stage2 = 1e-3;
  t.lr_stage3 = 1e-4;

  const bool joint = grid != AblationGrid::base && grid != AblationGrid::A;
  const bool align = grid == AblationGrid::A || grid == AblationGrid::E;
  t.model.joint_branch = joint;
  t.cue = grid == AblationGrid::B ? SelectionCue::temporal : SelectionCue::spatial;
  t.assignment = grid == AblationGrid::C ? AssignStrategy::all_actor : AssignStrategy::ego_centric;
  if (joint) {
    t.epochs = {cfg.stage1, cfg.stage2, align ? cfg.stage3 : 0};
  } else {
    // no joint stage: spend the same supervised budget on the marginal branch
    t.epochs = {cfg.stage1 + cfg.stage2, 0, align ? cfg.stage3 : 0};
  }
  t.weights.lambda_rl = align ? 1.0 : 0.0;
  t.grpo.scope = AlignScope::ego;
  return t;
}

std::vector<Scene> ablation_train_scenes(const AblationConfig& cfg) {
  return generate_scenes(cfg.data_seed, cfg.train_scenes,
                         {kAllTags, kAllTags + 5});
}

std::vector<Scene> ablation_eval_scenes(const AblationConfig& cfg) {
  return generate_scenes(cfg.data_seed + 100000, cfg.eval_scenes,
                         {kAllTags, kAllTags + 5});
}

double median(std::vector<double> xs) {
  if (xs.empty()) throw std::invalid_argument("median: empty");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

AblationResult run_ablation(AblationGrid grid, const AblationConfig& cfg,
                            const std::vector<Scene>& train_scenes,
                            const std::vector<Scene>& eval_scenes,
                            const std::vector<std::string>& resume_checkpoints) {
  AblationResult result;
  result.grid = grid;
  std::vector<double> srs, dss;
  for (std::size_t si = 0; si < cfg.model_seeds.size(); ++si) {
    const std::uint64_t seed = cfg.model_seeds[si];
    TrainConfig tc = grid_train_config(grid, cfg, seed);
    const std::string run_dir =
        cfg.out_dir + "/" + to_string(grid) + "/seed" + std::to_string(seed);
    std::filesystem::create_directories(run_dir);
    tc.out_dir = run_dir;
    const std::string resume =
        si < resume_checkpoints.size() ? resume_checkpoints[si] : std::string();
    const TrainResult tr = train(tc, train_scenes, resume);
    if (tr.aborted) throw std::runtime_error("ablation: training aborted (non-finite loss)");

    CaadModel model = model_from_checkpoint(tr.checkpoint_path);
    AblationRun run;
    run.model_seed = seed;
    run.checkpoint = tr.checkpoint_path;
    std::vector<EpisodeResult> episodes;
    run.summary = evaluate(eval_scenes, &model, PolicyMode::model, cfg.horizon_steps, &episodes);
    save_eval_report(run_dir + "/eval.jsonl", episodes, run.summary);
    srs.push_back(run.summary.overall.success_rate);
    dss.push_back(run.summary.overall.driving_score);
    result.runs.push_back(std::move(run));
  }
  result.median_success_rate = median(srs);
  result.median_driving_score = median(dss);
  return result;
}

AblationSuite run_ablation_suite(const std::vector<AblationGrid>& grids,
                                 const AblationConfig& cfg) {
  const std::vector<Scene> train_scenes = ablation_train_scenes(cfg);
  const std::vector<Scene> eval_scenes = ablation_eval_scenes(cfg);
  AblationSuite suite;
  std::vector<std::string> d_checkpoints;
  // E continues D's supervised stages, so run D first when both are requested
  std::vector<AblationGrid> order = grids;
  const bool has_d = std::find(order.begin(), order.end(), AblationGrid::D) != order.end();
  const bool has_e = std::find(order.begin(), order.end(), AblationGrid::E) != order.end();
  if (has_d && has_e)
    std::stable_partition(order.begin(), order.end(),
                          [](AblationGrid g) { return g != AblationGrid::E; });
  for (AblationGrid g : order) {
    std::vector<std::string> resume;
    if (g == AblationGrid::E && has_d) resume = d_checkpoints;
    AblationResult r = run_ablation(g, cfg, train_scenes, eval_scenes, resume);
    if (g == AblationGrid::D)
      for (const AblationRun& run : r.runs) d_checkpoints.push_back(run.checkpoint);
    suite.results.push_back(std::move(r));
  }
  return suite;
}

}  // namespace caad
