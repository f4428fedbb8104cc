#pragma once

#include <cstdint>
#include <string>

#include "caad/scene.hpp"

namespace caad {

// Small deterministic scene used by the gradient suite: straight road, ego
// plus a configurable number of agents with simple constant-speed futures.
Scene make_fixture_scene(int n_agents = 3, std::uint64_t seed = 5);

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  int params_checked = 0;
  double analytic_at_worst = 0.0;
  double fd_at_worst = 0.0;
};

// End-to-end finite-difference check (central differences, step fd_step) of
// the full supervised loss over every parameter of a reduced-size model on a
// 3-agent fixture. The winner-takes-all assignment and the interaction set
// are frozen at the base point so the check runs on the smooth piece of the
// loss surface.
GradCheckResult run_gradcheck(std::uint64_t seed = 5, double fd_step = 1e-5);

}  // namespace caad
