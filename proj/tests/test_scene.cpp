#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "caad/assignment.hpp"
#include "caad/reward.hpp"
#include "caad/scene_gen.hpp"
#include "caad/scene_io.hpp"

using namespace caad;

namespace {
std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// GT futures as single-candidate marginal predictions, for running the
// interaction selector as a generator oracle.
MarginalPredictionSet gt_as_marginal(const Scene& s) {
  MarginalPredictionSet set;
  for (const AgentState& a : s.agents) {
    set.candidates.push_back({agent_gt_tp(a)});
    set.logits.push_back({0.0});
  }
  return set;
}
}  // namespace

TEST_CASE("generation is a pure function of (seed, tag)") {
  const std::string p1 = temp_path("caad_gen_a.jsonl");
  const std::string p2 = temp_path("caad_gen_b.jsonl");
  save_scenes({generate_scene(7, ScenarioTag::merge)}, p1);
  save_scenes({generate_scene(7, ScenarioTag::merge)}, p2);
  CHECK(file_bytes(p1) == file_bytes(p2));
  CHECK_FALSE(file_bytes(p1).empty());
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("unknown tag string is a configuration error") {
  CHECK_THROWS_AS(tag_from_string("roundabout"), std::invalid_argument);
}

TEST_CASE("all templates satisfy scene invariants across seeds") {
  for (ScenarioTag tag : kAllTags)
    for (std::uint64_t seed = 100; seed < 140; ++seed) {
      const Scene s = generate_scene(seed, tag);
      validate_scene(s);  // throws on violation
      CHECK(s.agents.size() >= 2);
      CHECK(s.agents.size() <= 10);
    }
}

TEST_CASE("free_flow: no agent GT future enters the route corridor") {
  for (std::uint64_t seed = 200; seed < 300; ++seed) {
    const Scene s = generate_scene(seed, ScenarioTag::free_flow);
    const Polyline path = selection_path(s, SelectionCue::spatial);
    const InteractionSet set = select_interaction_set(s, gt_as_marginal(s), path, 0.25);
    CHECK(set.members.empty());
  }
}

TEST_CASE("merge: at least one agent triggers the interaction predicate") {
  for (std::uint64_t seed = 300; seed < 400; ++seed) {
    const Scene s = generate_scene(seed, ScenarioTag::merge);
    const Polyline path = selection_path(s, SelectionCue::spatial);
    const InteractionSet set = select_interaction_set(s, gt_as_marginal(s), path, 0.25);
    CHECK_FALSE(set.members.empty());
  }
}

TEST_CASE("expert feasibility: GT ego future scores nc=1 and dac=1 on every template") {
  for (ScenarioTag tag : kAllTags)
    for (std::uint64_t seed = 400; seed < 425; ++seed) {
      const Scene s = generate_scene(seed, tag);
      const RewardBreakdown b = score_rollout(gt_ego_tp(s), s);
      INFO(to_string(tag), " seed ", seed);
      CHECK(b.nc == 1.0);
      CHECK_FALSE(b.collided);
      CHECK(b.dac == 1.0);
    }
}

TEST_CASE("scene file round trip") {
  const std::string path = temp_path("caad_roundtrip.jsonl");

  SUBCASE("empty list gives a header-only file") {
    save_scenes({}, path);
    const auto loaded = load_scenes(path);
    CHECK(loaded.empty());
    CHECK(file_bytes(path) == "{\"format\":\"caad-scene\",\"version\":1}\n");
  }

  SUBCASE("single scene round trips bit-exactly") {
    save_scenes({generate_scene(11, ScenarioTag::crossing)}, path);
    const auto loaded = load_scenes(path);
    REQUIRE(loaded.size() == 1);
    const std::string again = temp_path("caad_roundtrip2.jsonl");
    save_scenes(loaded, again);
    CHECK(file_bytes(path) == file_bytes(again));
    std::remove(again.c_str());
  }

  SUBCASE("1000 scenes round trip with order preserved") {
    std::vector<Scene> scenes;
    for (int i = 0; i < 1000; ++i)
      scenes.push_back(generate_scene(static_cast<std::uint64_t>(1000 + i),
                                      kAllTags[static_cast<std::size_t>(i % 5)]));
    save_scenes(scenes, path);
    const auto loaded = load_scenes(path);
    REQUIRE(loaded.size() == scenes.size());
    for (std::size_t i = 0; i < scenes.size(); ++i) CHECK(loaded[i].scene_id == scenes[i].scene_id);
    const std::string again = temp_path("caad_roundtrip3.jsonl");
    save_scenes(loaded, again);
    CHECK(file_bytes(path) == file_bytes(again));
    std::remove(again.c_str());
  }

  std::remove(path.c_str());
}

TEST_CASE("malformed record reports its line number") {
  const std::string path = temp_path("caad_badfile.jsonl");
  {
    std::ofstream out(path);
    out << "{\"format\":\"caad-scene\",\"version\":1}\n";
    out << "{not json}\n";
  }
  try {
    load_scenes(path);
    FAIL("expected parse error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("ego frame transform") {
  const Scene s = generate_scene(55, ScenarioTag::overtake);

  SUBCASE("ego lands at the origin with zero heading") {
    const Scene e = ego_frame_transform(s);
    CHECK(e.ego.current().x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(e.ego.current().y == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(e.ego.current().heading == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("transform then inverse recovers the original within 1e-9") {
    const FrameTransform f = ego_frame_of(s);
    for (const AgentState& a : s.agents)
      for (const Pose2& p : a.gt_future) {
        const Pose2 back = f.to_world(f.to_ego(p));
        CHECK(std::abs(back.x - p.x) < 1e-9);
        CHECK(std::abs(back.y - p.y) < 1e-9);
        CHECK(std::abs(geo::wrap_angle(back.heading - p.heading)) < 1e-9);
      }
  }

  SUBCASE("pairwise inter-agent distances are preserved within 1e-9") {
    const Scene e = ego_frame_transform(s);
    for (std::size_t i = 0; i < s.agents.size(); ++i)
      for (std::size_t j = i + 1; j < s.agents.size(); ++j) {
        const double before =
            geo::dist(s.agents[i].current().position(), s.agents[j].current().position());
        const double after =
            geo::dist(e.agents[i].current().position(), e.agents[j].current().position());
        CHECK(std::abs(before - after) < 1e-9);
      }
  }
}

TEST_CASE("gt spatial trajectory has exact 2 m spacing and P points") {
  for (std::uint64_t seed = 500; seed < 520; ++seed)
    for (ScenarioTag tag : kAllTags) {
      const Scene s = ego_frame_transform(generate_scene(seed, tag));
      const TrajectorySP sp = gt_ego_sp(s);
      REQUIRE(static_cast<int>(sp.points.size()) == kSpatialPoints);
      for (std::size_t i = 1; i < sp.points.size(); ++i)
        CHECK(std::abs(geo::dist(sp.points[i - 1], sp.points[i]) - kSpatialSpacing) < 1e-6);
    }
}
