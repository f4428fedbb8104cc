#include "caad/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "caad/ablation.hpp"
#include "caad/gradcheck.hpp"
#include "caad/scene_gen.hpp"
#include "caad/scene_io.hpp"
#include "caad/simulator.hpp"
#include "caad/trainer.hpp"

namespace caad {

namespace {

std::string resolve_path(const std::string& path) {
  if (path.empty() || std::filesystem::path(path).is_absolute()) return path;
  const char* base = std::getenv("CAAD_DATA_DIR");
  if (base == nullptr || *base == '\0') return path;
  return (std::filesystem::path(base) / path).string();
}

std::vector<ScenarioTag> parse_tags(const std::string& csv) {
  std::vector<ScenarioTag> tags;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) tags.push_back(tag_from_string(item));
  }
  if (tags.empty()) throw std::invalid_argument("no scenario tags given");
  return tags;
}

void cmd_gen(std::uint64_t seed, int count, const std::string& tags_csv, const std::string& out) {
  const auto scenes = generate_scenes(seed, count, parse_tags(tags_csv));
  save_scenes(scenes, resolve_path(out));
  std::cout << "wrote " << scenes.size() << " scenes to " << resolve_path(out) << "\n";
}

void cmd_train(const std::string& config_path, const std::string& out_dir,
               const std::string& resume) {
  TrainConfig cfg = TrainConfig::load(resolve_path(config_path));
  if (!out_dir.empty()) cfg.out_dir = resolve_path(out_dir);
  std::filesystem::create_directories(cfg.out_dir);
  const auto scenes = load_scenes(resolve_path(cfg.scene_file));
  const TrainResult r = train(cfg, scenes, resume.empty() ? "" : resolve_path(resume));
  std::cout << "checkpoint: " << r.checkpoint_path << "\nmetrics: " << r.metrics_path << "\n";
  if (r.aborted) throw std::runtime_error("training aborted on non-finite loss; last-good checkpoint retained");
}

void cmd_align(const std::string& config_path, const std::string& checkpoint,
               const std::string& out_dir) {
  TrainConfig cfg = TrainConfig::load(resolve_path(config_path));
  cfg.epochs.stage1 = 0;
  cfg.epochs.stage2 = 0;
  if (cfg.epochs.stage3 <= 0)
    throw std::runtime_error("align: config must set epochs.stage3 > 0");
  if (cfg.weights.lambda_rl == 0.0)
    throw std::runtime_error("align: config must set weights.lambda_rl > 0");
  if (!out_dir.empty()) cfg.out_dir = resolve_path(out_dir);
  std::filesystem::create_directories(cfg.out_dir);
  const auto scenes = load_scenes(resolve_path(cfg.scene_file));
  const TrainResult r = train(cfg, scenes, resolve_path(checkpoint));
  std::cout << "checkpoint: " << r.checkpoint_path << "\nmetrics: " << r.metrics_path << "\n";
  if (r.aborted) throw std::runtime_error("alignment aborted on non-finite loss");
}

void cmd_score(const std::string& scene_path, const std::string& rollout_path,
               const std::string& out) {
  const auto scenes = load_scenes(resolve_path(scene_path));
  std::map<std::string, const Scene*> by_id;
  for (const Scene& s : scenes) by_id[s.scene_id] = &s;
  const auto rollouts = load_rollouts(resolve_path(rollout_path));
  std::ofstream os(resolve_path(out), std::ios::binary);
  if (!os) throw std::runtime_error("score: cannot open '" + out + "' for writing");
  os << "{\"format\":\"caad-reward\",\"version\":1}\n";
  for (const RolloutRecord& r : rollouts) {
    const auto it = by_id.find(r.scene_id);
    if (it == by_id.end())
      throw std::runtime_error("score: rollout references unknown scene '" + r.scene_id + "'");
    const RewardBreakdown b = score_rollout(r.traj, *it->second);
    JsonWriter w;
    w.begin_object();
    w.key("scene_id").value(r.scene_id);
    w.key("nc").value(b.nc);
    w.key("dac").value(b.dac);
    w.key("dd").value(b.dd);
    w.key("ep").value(b.ep);
    w.key("ttc").value(b.ttc);
    w.key("comfort").value(b.comfort);
    w.key("d_opp").value(b.d_opp);
    w.key("t_ttc").value(b.t_ttc);
    w.key("collided").value(b.collided);
    w.key("at_fault").value(b.at_fault);
    w.key("reward").value(b.reward);
    w.key("comfort_terms").begin_array();
    for (const ComfortTerm& t : b.comfort_terms) {
      w.begin_object();
      w.key("name").value(t.name);
      w.key("peak").value(t.peak);
      w.key("threshold").value(t.threshold);
      w.key("delta").value(t.delta);
      w.key("alpha").value(t.alpha);
      w.key("score").value(t.score);
      w.end_object();
    }
    w.end_array();
    w.end_object();
    os << w.str() << '\n';
  }
  std::cout << "scored " << rollouts.size() << " rollouts\n";
}

void cmd_eval(const std::string& checkpoint, const std::string& scenes_path,
              const std::string& out, const std::string& policy_name, int horizon) {
  PolicyMode policy = PolicyMode::model;
  if (policy_name == "gt_replay") policy = PolicyMode::gt_replay;
  else if (policy_name == "zero") policy = PolicyMode::zero_motion;
  else if (policy_name != "model")
    throw std::invalid_argument("eval: unknown policy '" + policy_name + "'");
  const auto scenes = load_scenes(resolve_path(scenes_path));
  std::vector<EpisodeResult> episodes;
  EvalSummary summary;
  if (policy == PolicyMode::model) {
    CaadModel model = model_from_checkpoint(resolve_path(checkpoint));
    summary = evaluate(scenes, &model, policy, horizon, &episodes);
  } else {
    summary = evaluate(scenes, nullptr, policy, horizon, &episodes);
  }
  save_eval_report(resolve_path(out), episodes, summary);
  std::cout << "episodes: " << summary.overall.episodes
            << " success_rate: " << summary.overall.success_rate
            << " driving_score: " << summary.overall.driving_score << "\n";
}

int cmd_gradcheck() {
  const GradCheckResult r = run_gradcheck();
  std::cout << "checked " << r.params_checked << " parameters, max relative error "
            << r.max_rel_err << " at " << r.worst_param << "\n";
  return r.max_rel_err < 1e-3 ? 0 : 2;
}

void cmd_ablate(const std::string& grids_csv, const std::string& out_dir, const std::string& seeds_csv,
                int train_count, int eval_count) {
  AblationConfig cfg;
  cfg.out_dir = resolve_path(out_dir.empty() ? "." : out_dir);
  cfg.train_scenes = train_count;
  cfg.eval_scenes = eval_count;
  if (!seeds_csv.empty()) {
    cfg.model_seeds.clear();
    std::stringstream ss(seeds_csv);
    std::string item;
    while (std::getline(ss, item, ',')) cfg.model_seeds.push_back(std::stoull(item));
  }
  std::vector<AblationGrid> grids;
  std::stringstream ss(grids_csv);
  std::string item;
  while (std::getline(ss, item, ',')) grids.push_back(grid_from_string(item));
  std::filesystem::create_directories(cfg.out_dir);
  const AblationSuite suite = run_ablation_suite(grids, cfg);

  std::ofstream os(cfg.out_dir + "/ablation.csv", std::ios::binary);
  os << "grid,seed,success_rate,driving_score\n";
  for (const AblationResult& r : suite.results) {
    for (const AblationRun& run : r.runs)
      os << to_string(r.grid) << "," << run.model_seed << ","
         << format_double(run.summary.overall.success_rate) << ","
         << format_double(run.summary.overall.driving_score) << "\n";
    os << to_string(r.grid) << ",median," << format_double(r.median_success_rate) << ","
       << format_double(r.median_driving_score) << "\n";
    std::cout << to_string(r.grid) << ": median success rate " << r.median_success_rate
              << ", median driving score " << r.median_driving_score << "\n";
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"caad: joint-causal scene modeling and policy alignment on synthetic driving scenes"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate scenes to a line-delimited scene file");
  std::uint64_t gen_seed = 1;
  int gen_count = 10;
  std::string gen_tags = "merge,crossing,lead_brake,overtake,free_flow";
  std::string gen_out = "scenes.jsonl";
  gen->add_option("--seed", gen_seed, "base seed; scene i uses seed+i");
  gen->add_option("--count", gen_count, "number of scenes");
  gen->add_option("--tags", gen_tags, "comma-separated scenario tags");
  gen->add_option("--out", gen_out, "output path")->required();

  // train
  auto* tr = app.add_subcommand("train", "run the three-stage training schedule");
  std::string tr_config, tr_out, tr_resume;
  tr->add_option("--config", tr_config, "train config file (key=value lines)")->required();
  tr->add_option("--out", tr_out, "output directory (overrides config out_dir)");
  tr->add_option("--resume", tr_resume, "checkpoint to resume from");

  // align
  auto* al = app.add_subcommand("align", "stage-3 policy alignment of an existing checkpoint");
  std::string al_config, al_ckpt, al_out;
  al->add_option("--config", al_config, "train config file")->required();
  al->add_option("--checkpoint", al_ckpt, "checkpoint to align")->required();
  al->add_option("--out", al_out, "output directory");

  // score
  auto* sc = app.add_subcommand("score", "score rollouts against scenes with the planning reward");
  std::string sc_scene, sc_rollouts, sc_out;
  sc->add_option("--scene", sc_scene, "scene file")->required();
  sc->add_option("--rollouts", sc_rollouts, "rollout file")->required();
  sc->add_option("--out", sc_out, "output breakdown file")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "closed-loop evaluation of a checkpoint");
  std::string ev_ckpt, ev_scenes, ev_out, ev_policy = "model";
  int ev_horizon = kDefaultHorizonSteps;
  ev->add_option("--checkpoint", ev_ckpt, "model checkpoint");
  ev->add_option("--scenes", ev_scenes, "scene file")->required();
  ev->add_option("--out", ev_out, "evaluation report path")->required();
  ev->add_option("--policy", ev_policy, "model | gt_replay | zero");
  ev->add_option("--horizon", ev_horizon, "max steps per episode");

  // gradcheck
  app.add_subcommand("gradcheck", "finite-difference check of all model gradients");

  // ablate
  auto* ab = app.add_subcommand("ablate", "train and evaluate ablation grid entries");
  std::string ab_grid = "base,C,D,E", ab_out = "ablation", ab_seeds;
  int ab_train = 400, ab_eval = 100;
  ab->add_option("--grid", ab_grid, "comma-separated grid letters (base|A|B|C|D|E)");
  ab->add_option("--out", ab_out, "output directory");
  ab->add_option("--seeds", ab_seeds, "comma-separated model seeds (default 1,2,3)");
  ab->add_option("--train-scenes", ab_train, "training scene count");
  ab->add_option("--eval-scenes", ab_eval, "held-out scene count");

  std::vector<const char*> argv;
  argv.push_back("caad");
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) cmd_gen(gen_seed, gen_count, gen_tags, gen_out);
    else if (tr->parsed()) cmd_train(tr_config, tr_out, tr_resume);
    else if (al->parsed()) cmd_align(al_config, al_ckpt, al_out);
    else if (sc->parsed()) cmd_score(sc_scene, sc_rollouts, sc_out);
    else if (ev->parsed()) cmd_eval(ev_ckpt, ev_scenes, ev_out, ev_policy, ev_horizon);
    else if (app.get_subcommand("gradcheck")->parsed()) return cmd_gradcheck();
    else if (ab->parsed()) cmd_ablate(ab_grid, ab_out, ab_seeds, ab_train, ab_eval);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace caad
