#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "caad/scene_gen.hpp"
#include "caad/trainer.hpp"

using namespace caad;

namespace {
std::string temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::create_directories(p);
  return p.string();
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TrainConfig tiny_config(const std::string& out_dir) {
  TrainConfig c;
  c.model.embed_dim = 16;
  c.model.heads = 2;
  c.model.ffn_mult = 2;
  c.model.joint_modes = 3;
  c.model.marginal_modes = 2;
  c.epochs = {1, 1, 1};
  c.batch_size = 4;
  c.grpo.group_size = 4;
  c.out_dir = out_dir;
  return c;
}

std::vector<Scene> tiny_scenes(int n = 8) {
  return generate_scenes(3000, n, {kAllTags, kAllTags + 5});
}
}  // namespace

TEST_CASE("adamw basics") {
  SUBCASE("zero grads and zero decay leave parameters unchanged") {
    nn::ParamStore ps;
    nn::Tensor p = ps.create("p", {3}, {1.0, -2.0, 0.5});
    ps.zero_grads();
    AdamW opt;
    opt.step(ps, 0.1, 0.0, 1.0);
    CHECK(p.values() == std::vector<double>{1.0, -2.0, 0.5});
  }

  SUBCASE("decay only scales by 0.9 per step") {
    nn::ParamStore ps;
    nn::Tensor p = ps.create("p", {1}, {2.0});
    ps.zero_grads();
    AdamW opt;
    opt.step(ps, 1.0, 0.1, 1.0);
    CHECK(p.values()[0] == doctest::Approx(1.8).epsilon(1e-12));
    opt.step(ps, 1.0, 0.1, 1.0);
    CHECK(p.values()[0] == doctest::Approx(1.62).epsilon(1e-12));
  }

  SUBCASE("quadratic bowl converges: |p| < 1e-3 after 200 steps at lr 0.1") {
    nn::ParamStore ps;
    nn::Tensor p = ps.create("p", {1}, {1.0});
    AdamW opt;
    for (int i = 0; i < 200; ++i) {
      p.impl_->ensure_grad();
      p.zero_grad();
      p.impl_->grad[0] = 2.0 * p.values()[0];
      opt.step(ps, 0.1, 0.0, 1.0);
    }
    CHECK(std::abs(p.values()[0]) < 1e-3);
  }

  SUBCASE("frozen parameters are untouched") {
    nn::ParamStore ps;
    nn::Tensor p = ps.create("p", {1}, {1.0});
    p.impl_->ensure_grad();
    p.impl_->grad[0] = 5.0;
    AdamW opt;
    opt.step(ps, 0.1, 0.1, 1.0, {"p"});
    CHECK(p.values()[0] == 1.0);
  }
}

TEST_CASE("zero-epoch run persists the initial checkpoint with empty metrics") {
  const std::string dir = temp_dir("caad_train_zero");
  TrainConfig c = tiny_config(dir);
  c.epochs = {0, 0, 0};
  const TrainResult r = train(c, tiny_scenes());
  CHECK(r.metrics.empty());
  CHECK(std::filesystem::exists(r.checkpoint_path));
  const CaadModel restored = model_from_checkpoint(r.checkpoint_path);
  const CaadModel fresh(c.model, Rng(c.seed).split("init").next_u64());
  for (const auto& name : fresh.params().names())
    CHECK(restored.params().get(name).values() == fresh.params().get(name).values());
}

TEST_CASE("identical config and seed give byte-identical metrics files") {
  const std::string d1 = temp_dir("caad_train_det1");
  const std::string d2 = temp_dir("caad_train_det2");
  const auto scenes = tiny_scenes();
  TrainConfig c1 = tiny_config(d1);
  TrainConfig c2 = tiny_config(d2);
  const TrainResult r1 = train(c1, scenes);
  const TrainResult r2 = train(c2, scenes);
  CHECK_FALSE(r1.metrics.empty());
  CHECK(file_bytes(r1.metrics_path) == file_bytes(r2.metrics_path));
  CHECK(file_bytes(r1.checkpoint_path) == file_bytes(r2.checkpoint_path));
}

TEST_CASE("resume equivalence: train 2 epochs equals train 1, reload, train 1 more") {
  const auto scenes = tiny_scenes();

  const std::string d_full = temp_dir("caad_resume_full");
  TrainConfig full = tiny_config(d_full);
  full.epochs = {2, 0, 0};
  const TrainResult r_full = train(full, scenes);

  const std::string d_half = temp_dir("caad_resume_half");
  TrainConfig half = tiny_config(d_half);
  half.epochs = {1, 0, 0};
  const TrainResult r_half = train(half, scenes);

  const std::string d_cont = temp_dir("caad_resume_cont");
  TrainConfig cont = tiny_config(d_cont);
  cont.epochs = {2, 0, 0};
  const TrainResult r_cont = train(cont, scenes, r_half.checkpoint_path);

  REQUIRE(r_full.metrics.size() == 2);
  REQUIRE(r_cont.metrics.size() == 1);
  CHECK(r_cont.metrics[0].epoch == 2);
  CHECK(r_cont.metrics[0].loss.total == r_full.metrics[1].loss.total);
  CHECK(r_cont.metrics[0].ego_min_ade == r_full.metrics[1].ego_min_ade);
  CHECK(file_bytes(r_cont.checkpoint_path) == file_bytes(r_full.checkpoint_path));
}

TEST_CASE("grpo component is exactly zero in stages 1 and 2") {
  const std::string dir = temp_dir("caad_train_gate");
  TrainConfig c = tiny_config(dir);
  const TrainResult r = train(c, tiny_scenes());
  REQUIRE(r.metrics.size() == 3);
  CHECK(r.metrics[0].stage == 1);
  CHECK(r.metrics[0].loss.grpo == 0.0);
  CHECK(r.metrics[1].stage == 2);
  CHECK(r.metrics[1].loss.grpo == 0.0);
  CHECK(r.metrics[2].stage == 3);
  // stage 1 also has no joint terms
  CHECK(r.metrics[0].loss.joint_reg == 0.0);
  CHECK(r.metrics[1].loss.joint_reg != 0.0);
}

TEST_CASE("agent joint-head parameters stay bit-identical through ego-scope stage 3") {
  const auto scenes = tiny_scenes();
  TrainConfig base = tiny_config(temp_dir("caad_freeze_a"));
  base.epochs = {1, 1, 0};
  const TrainResult ra = train(base, scenes);
  TrainConfig full = tiny_config(temp_dir("caad_freeze_b"));
  full.epochs = {1, 1, 2};
  const TrainResult rb = train(full, scenes);

  const CaadModel ma = model_from_checkpoint(ra.checkpoint_path);
  const CaadModel mb = model_from_checkpoint(rb.checkpoint_path);
  bool ego_head_changed = false;
  for (const auto& name : ma.params().names()) {
    if (ma.is_agent_joint_head_param(name)) {
      CHECK(ma.params().get(name).values() == mb.params().get(name).values());
    } else if (name.rfind("joint.ego_head", 0) == 0) {
      ego_head_changed =
          ego_head_changed || ma.params().get(name).values() != mb.params().get(name).values();
    }
  }
  CHECK(ego_head_changed);
}

TEST_CASE("training reduces ego minADE on a fixture set") {
  const std::string dir = temp_dir("caad_train_descent");
  TrainConfig c = tiny_config(dir);
  c.epochs = {2, 10, 0};
  c.batch_size = 8;
  const auto scenes = generate_scenes(4000, 48, {kAllTags, kAllTags + 5});
  const TrainResult r = train(c, scenes);
  REQUIRE(r.metrics.size() == 12);
  CHECK(r.metrics.back().ego_min_ade < r.metrics.front().ego_min_ade);
}

TEST_CASE("non-finite loss aborts and retains the last-good checkpoint") {
  const std::string dir = temp_dir("caad_train_abort");
  TrainConfig c = tiny_config(dir);
  c.epochs = {3, 0, 0};
  c.lr_stage1 = 1e14;  // guaranteed blow-up
  const TrainResult r = train(c, tiny_scenes());
  CHECK(r.aborted);
  // whatever was saved before the abort still loads
  if (std::filesystem::exists(r.checkpoint_path)) {
    const CaadModel m = model_from_checkpoint(r.checkpoint_path);
    for (double v : m.params().get("enc.hist.l1.w").values()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("checkpoint round trip and corruption handling") {
  const std::string dir = temp_dir("caad_ckpt");
  TrainConfig c = tiny_config(dir);
  c.epochs = {1, 0, 0};
  const TrainResult r = train(c, tiny_scenes());

  SUBCASE("save then load restores parameters exactly") {
    const CaadModel m = model_from_checkpoint(r.checkpoint_path);
    AdamW opt;
    save_train_checkpoint(dir + "/again.ckpt", m, opt, 1, 1);
    const CaadModel m2 = model_from_checkpoint(dir + "/again.ckpt");
    for (const auto& name : m.params().names())
      CHECK(m.params().get(name).values() == m2.params().get(name).values());
  }

  SUBCASE("corrupt file raises an error and mutates nothing") {
    const std::string bad = dir + "/bad.ckpt";
    std::ofstream out(bad, std::ios::binary);
    out << file_bytes(r.checkpoint_path).substr(0, 100);
    out.close();
    CHECK_THROWS_AS(model_from_checkpoint(bad), std::runtime_error);

    // shape mismatch is rejected before any parameter is written
    CaadModel model(c.model, 1);
    Checkpoint ck = Checkpoint::load(r.checkpoint_path);
    ck.arrays["param/enc.hist.l1.w"].data.resize(4);
    ck.arrays["param/enc.hist.l1.w"].shape = {2, 2};
    const auto before = model.params().get("enc.hist.l2.w").values();
    CHECK_THROWS_AS(bind_params(ck, model.params()), std::runtime_error);
    CHECK(model.params().get("enc.hist.l2.w").values() == before);
  }
}

TEST_CASE("train config round trips through its file format") {
  TrainConfig c = tiny_config("/tmp/x");
  c.scene_file = "scenes.jsonl";
  c.cue = SelectionCue::temporal;
  c.assignment = AssignStrategy::all_actor;
  c.weights.lambda_rl = 0.5;
  const TrainConfig d = TrainConfig::deserialize(c.serialize());
  CHECK(d.serialize() == c.serialize());
  CHECK(d.cue == SelectionCue::temporal);
  CHECK(d.assignment == AssignStrategy::all_actor);
  CHECK_THROWS_AS(TrainConfig::deserialize("bogus_key=1\n"), std::runtime_error);
}
