#pragma once

#include <cstdint>
#include <vector>

#include "caad/scene.hpp"

namespace caad {

// Deterministic function of (seed, tag). Produces one of five interaction
// templates with randomized geometry: lane widths 3-4 m, speeds 3-12 m/s,
// agent counts 2-10. Ground-truth futures come from kinematic rollouts with
// scripted interactions; in merge, crossing and lead_brake the interacting
// agent yields iff a seeded coin flip, and the expert ego future is scripted
// to the matching behavior. The generated expert future is collision-free and
// stays inside the drivable polygon.
Scene generate_scene(std::uint64_t seed, ScenarioTag tag);

// Round-robin over the requested tags with consecutive seeds starting at seed0.
std::vector<Scene> generate_scenes(std::uint64_t seed0, int count,
                                   const std::vector<ScenarioTag>& tags);

}  // namespace caad
