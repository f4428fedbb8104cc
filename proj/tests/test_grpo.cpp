#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "caad/gradcheck.hpp"
#include "caad/grpo.hpp"
#include "caad/trainer.hpp"
#include "test_support.hpp"

using namespace caad;
using ad::Tensor;
using testing::close;
using testing::finite_diff;

namespace {
constexpr double kLog2Pi = 1.8378770664093453;

SceneHypothesis toy_hypothesis(double sigma = 0.3) {
  SceneHypothesis h;
  h.mode_index = 0;
  for (int k = 1; k <= kFutureSteps; ++k) h.ego_traj.points.push_back({2.5 * k, 0.0});
  h.ego_sigma.assign(static_cast<std::size_t>(kFutureSteps) * 2, sigma);
  return h;
}
}  // namespace

TEST_CASE("sampling is deterministic given the rng seed") {
  const SceneHypothesis h = toy_hypothesis();
  Rng a(42), b(42);
  const RolloutGroup ga = sample_group(h, 8, a);
  const RolloutGroup gb = sample_group(h, 8, b);
  CHECK(ga.rollouts == gb.rollouts);
  CHECK(ga.old_logp == gb.old_logp);
  CHECK_THROWS_AS(sample_group(h, 1, a), std::invalid_argument);
}

TEST_CASE("sample deviations at the lower sigma clamp have the right spread") {
  SceneHypothesis h = toy_hypothesis(0.05);
  Rng rng(7);
  double sq = 0.0;
  int n = 0;
  for (int rep = 0; rep < 80; ++rep) {
    const RolloutGroup g = sample_group(h, 8, rng);
    for (const auto& roll : g.rollouts)
      for (std::size_t e = 0; e < roll.size(); ++e) {
        const double mu = e % 2 == 0 ? h.ego_traj.points[e / 2].x : h.ego_traj.points[e / 2].y;
        sq += (roll[e] - mu) * (roll[e] - mu);
        ++n;
      }
  }
  const double emp_std = std::sqrt(sq / n);
  CHECK(n >= 10000);
  CHECK(emp_std == doctest::Approx(0.05).epsilon(0.10));
}

TEST_CASE("old_logp of the mean equals the Gaussian density at the mean") {
  const SceneHypothesis h = toy_hypothesis(0.4);
  std::vector<double> mu, x;
  for (const Vec2& p : h.ego_traj.points) {
    mu.push_back(p.x);
    mu.push_back(p.y);
    x.push_back(p.x);
    x.push_back(p.y);
  }
  const double lp = gaussian_logp_plain(mu, h.ego_sigma, x);
  double expect = 0.0;
  for (double s : h.ego_sigma) expect += -std::log(s) - 0.5 * kLog2Pi;
  CHECK(lp == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("advantage law") {
  SUBCASE("rewards [0.2,0.8,0.8,0.2] without collisions") {
    const auto [a, t] = compute_advantages({0.2, 0.8, 0.8, 0.2}, {false, false, false, false}, 1e-6);
    CHECK(a[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(a[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(t[0] - 0.0) < 1e-12);
    CHECK(std::abs(t[1] - 1.0) < 1e-12);
    CHECK(std::abs(t[2] - 1.0) < 1e-12);
    CHECK(std::abs(t[3] - 0.0) < 1e-12);
  }

  SUBCASE("equal rewards give zero update signal") {
    const auto [a, t] = compute_advantages({0.5, 0.5, 0.5}, {false, false, false}, 1e-6);
    for (double v : a) CHECK(std::abs(v) < 1e-9);
    for (double v : t) CHECK(v == 0.0);
  }

  SUBCASE("collided rollouts get -1 regardless of reward") {
    const auto [a, t] = compute_advantages({0.9, 0.1, 0.5}, {true, false, false}, 1e-6);
    (void)a;
    CHECK(t[0] == -1.0);
  }

  SUBCASE("normalization invariant: mean 0 and population std 1") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> rewards(8);
      for (double& r : rewards) r = rng.uniform(0.0, 1.0);
      const auto [a, t] = compute_advantages(rewards, std::vector<bool>(8, false), 1e-6);
      (void)t;
      double mean = 0.0, var = 0.0;
      for (double v : a) mean += v;
      mean /= 8.0;
      for (double v : a) var += (v - mean) * (v - mean);
      var /= 8.0;
      // only meaningful when the reward spread exceeds the std floor
      double rstd = 0.0, rmean = 0.0;
      for (double r : rewards) rmean += r;
      rmean /= 8.0;
      for (double r : rewards) rstd += (r - rmean) * (r - rmean);
      rstd = std::sqrt(rstd / 8.0);
      if (rstd > 1e-6) {
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-6);
      }
    }
  }

  SUBCASE("truncated advantages live in {-1} union [0, inf)") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> rewards(6);
      std::vector<bool> collided(6);
      for (int i = 0; i < 6; ++i) {
        rewards[static_cast<std::size_t>(i)] = rng.uniform(0.0, 1.0);
        collided[static_cast<std::size_t>(i)] = rng.bernoulli(0.3);
      }
      const auto [a, t] = compute_advantages(rewards, collided, 1e-6);
      (void)a;
      for (std::size_t i = 0; i < 6; ++i)
        CHECK((t[i] == -1.0 || t[i] >= 0.0));
    }
  }
}

TEST_CASE("grpo_loss at unit ratio") {
  const SceneHypothesis h = toy_hypothesis();
  Rng rng(21);
  RolloutGroup g = sample_group(h, 4, rng);
  g.rewards = {0.2, 0.8, 0.8, 0.2};
  g.collided = {false, false, false, false};
  compute_advantages(g, 1e-6);

  std::vector<double> mu_v, sig_v;
  for (const Vec2& p : h.ego_traj.points) {
    mu_v.push_back(p.x);
    mu_v.push_back(p.y);
  }
  sig_v = h.ego_sigma;
  Tensor mu = Tensor::leaf({kFutureSteps * 2}, mu_v);
  Tensor sigma = Tensor::leaf({kFutureSteps * 2}, sig_v);

  SUBCASE("loss equals -mean(truncated advantages)") {
    const double loss = grpo_loss({g}, {mu}, {sigma}, 0.2).item();
    CHECK(std::abs(loss - (-0.5)) < 1e-12);
  }

  SUBCASE("all-zero advantages give zero loss and zero gradient") {
    RolloutGroup z = g;
    z.truncated = {0, 0, 0, 0};
    mu.zero_grad();
    sigma.zero_grad();
    {
      ad::Tape tape;
      grpo_loss({z}, {mu}, {sigma}, 0.2).backward();
    }
    for (double v : mu.grad()) CHECK(v == 0.0);
    for (double v : sigma.grad()) CHECK(v == 0.0);
  }

  SUBCASE("gradient equals the vanilla policy gradient within rtol 1e-6") {
    mu.zero_grad();
    sigma.zero_grad();
    {
      ad::Tape tape;
      grpo_loss({g}, {mu}, {sigma}, 0.2).backward();
    }
    const auto g_mu = mu.grad();
    const auto g_sigma = sigma.grad();

    // vanilla: -mean_g(A~_g * d logp_g / d theta)
    Tensor mu2 = Tensor::leaf({kFutureSteps * 2}, mu_v);
    Tensor sigma2 = Tensor::leaf({kFutureSteps * 2}, sig_v);
    {
      ad::Tape tape;
      Tensor logp = gaussian_logp(mu2, sigma2, g.rollouts);
      Tensor adv = Tensor::from({4}, g.truncated);
      ad::mul_scalar(ad::sum(ad::mul(logp, adv)), -0.25).backward();
    }
    for (std::size_t i = 0; i < g_mu.size(); ++i) {
      CHECK(close(g_mu[i], mu2.grad()[i], 1e-6, 1e-12));
      CHECK(close(g_sigma[i], sigma2.grad()[i], 1e-6, 1e-12));
    }
  }
}

TEST_CASE("clip binds for large ratios") {
  // one-element policy pushed so the new density is much higher
  RolloutGroup g;
  g.mode = 0;
  g.rollouts = {{1.0}, {-1.0}};
  g.truncated = {1.0, 0.0};
  g.collided = {false, false};
  // old density chosen so ratio = 10 exactly at the sample 1.0
  Tensor mu = Tensor::leaf({1}, {1.0});
  Tensor sigma = Tensor::leaf({1}, {0.5});
  const double new_lp = gaussian_logp_plain({1.0}, {0.5}, {1.0});
  g.old_logp = {new_lp - std::log(10.0), new_lp - std::log(10.0)};
  const double loss = grpo_loss({g}, {mu}, {sigma}, 0.2).item();
  // element 1: min(10 * 1, 1.2 * 1) = 1.2 (clip binds); element 2: 0
  CHECK(loss == doctest::Approx(-(1.2 + 0.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("non-finite ratio raises a numeric error naming the rollout") {
  RolloutGroup g;
  g.mode = 0;
  g.rollouts = {{1.0}, {2.0}};
  g.truncated = {1.0, 0.0};
  g.old_logp = {-2000.0, -2000.0};  // exp overflows
  Tensor mu = Tensor::leaf({1}, {1.0});
  Tensor sigma = Tensor::leaf({1}, {0.5});
  CHECK_THROWS_AS(grpo_loss({g}, {mu}, {sigma}, 0.2), std::domain_error);
}

TEST_CASE("grpo_loss gradient matches finite differences on a 2-parameter toy policy") {
  Rng rng(31);
  SceneHypothesis h;
  h.mode_index = 0;
  h.ego_traj.points = {{0.5, -0.2}};
  h.ego_sigma = {0.4, 0.7};
  // pretend t_fut = 1 for this toy: 2 coordinates, 2 parameters of interest
  RolloutGroup g;
  g.mode = 0;
  for (int i = 0; i < 6; ++i) {
    std::vector<double> x{0.5 + 0.4 * rng.normal(), -0.2 + 0.7 * rng.normal()};
    g.old_logp.push_back(gaussian_logp_plain({0.5, -0.2}, {0.4, 0.7}, x));
    g.rollouts.push_back(std::move(x));
  }
  g.rewards = {0.1, 0.9, 0.4, 0.7, 0.2, 0.6};
  g.collided = {false, false, true, false, false, false};
  compute_advantages(g, 1e-6);

  Tensor mu = Tensor::leaf({2}, {0.55, -0.1});  // slightly off the sampling point
  Tensor sigma = Tensor::leaf({2}, {0.45, 0.65});
  auto f = [&] { return grpo_loss({g}, {mu}, {sigma}, 0.2).item(); };
  mu.zero_grad();
  sigma.zero_grad();
  {
    ad::Tape tape;
    grpo_loss({g}, {mu}, {sigma}, 0.2).backward();
  }
  const auto fd_mu = finite_diff(mu, f);
  const auto fd_sigma = finite_diff(sigma, f);
  for (int i = 0; i < 2; ++i) {
    CHECK(close(mu.grad()[static_cast<std::size_t>(i)], fd_mu[static_cast<std::size_t>(i)], 1e-3, 1e-8));
    CHECK(close(sigma.grad()[static_cast<std::size_t>(i)], fd_sigma[static_cast<std::size_t>(i)], 1e-3, 1e-8));
  }
}

TEST_CASE("align_scene_loss") {
  const Scene world = make_fixture_scene(3, 11);
  ModelConfig cfg;
  cfg.embed_dim = 16;
  cfg.heads = 2;
  cfg.ffn_mult = 2;
  cfg.joint_modes = 3;
  cfg.marginal_modes = 2;
  CaadModel model(cfg, 5);
  GrpoConfig gcfg;
  gcfg.group_size = 4;

  SUBCASE("agent joint-head gradients are exactly zero in ego scope") {
    model.params().zero_grads();
    {
      ad::Tape tape;
      const Scene ego_scene = ego_frame_transform(world);
      const ModelOutput out = model.forward(ego_scene);
      Rng rng(3);
      AlignStats stats;
      align_scene_loss(out, world, ego_frame_of(world), gcfg, {}, rng, &stats).backward();
      CHECK(stats.rollouts > 0);
    }
    for (const auto& name : model.params().names()) {
      if (!model.is_agent_joint_head_param(name)) continue;
      for (double g : model.params().get(name).grad()) CHECK(g == 0.0);
    }
    // the ego joint head does receive gradient
    double norm = 0.0;
    for (double g : model.params().get("joint.ego_head.l2.w").grad()) norm += g * g;
    CHECK(norm > 0.0);
  }

  SUBCASE("one descent step reduces the loss recomputed at a fresh ratio baseline") {
    TrainConfig tc;
    tc.model = cfg;
    tc.grpo = gcfg;
    tc.seed = 5;
    AdamW opt;
    auto eval_loss = [&](bool update) {
      model.params().zero_grads();
      ad::Tape tape;
      const Scene ego_scene = ego_frame_transform(world);
      const ModelOutput out = model.forward(ego_scene);
      Rng rng(77);  // frozen sampling stream for both evaluations
      const Tensor loss = align_scene_loss(out, world, ego_frame_of(world), gcfg, {}, rng, nullptr);
      const double v = loss.item();
      if (update) {
        loss.backward();
        opt.step(model.params(), 1e-4, 0.0, 1.0);
      }
      return v;
    };
    const double before = eval_loss(true);
    const double after = eval_loss(false);
    // at theta = theta_old the loss is -mean(A~) with A~ >= -1; a small step
    // in the descent direction must not increase it
    CHECK(after < before + 1e-9);
  }
}
