#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "caad/geometry.hpp"

namespace caad {

using geo::DrivablePolygon;
using geo::Footprint;
using geo::Polyline;
using geo::Pose2;
using geo::Vec2;

inline constexpr int kHistorySteps = 4;   // H, includes the current pose
inline constexpr int kFutureSteps = 8;    // T_fut
inline constexpr double kDt = 0.5;        // seconds between steps
inline constexpr int kSpatialPoints = 10;  // P
inline constexpr double kSpatialSpacing = 2.0;  // meters

enum class ScenarioTag { merge, crossing, lead_brake, overtake, free_flow };

std::string to_string(ScenarioTag tag);
ScenarioTag tag_from_string(const std::string& s);
inline constexpr ScenarioTag kAllTags[] = {ScenarioTag::merge, ScenarioTag::crossing,
                                           ScenarioTag::lead_brake, ScenarioTag::overtake,
                                           ScenarioTag::free_flow};

// Temporally sampled trajectory: T_fut (x, y) points at kDt spacing.
struct TrajectoryTP {
  std::vector<Vec2> points;
};

// Spatially sampled trajectory: P (x, y) points at 2 m arc-length spacing.
struct TrajectorySP {
  std::vector<Vec2> points;
};

struct AgentState {
  int id = 0;
  Footprint footprint;
  std::vector<Pose2> history;    // H poses, history.back() is the current pose
  std::vector<Pose2> gt_future;  // T_fut poses
  std::vector<bool> gt_valid;    // per future step
  std::string role = "vehicle";

  const Pose2& current() const { return history.back(); }
  // speed from the last history displacement
  double speed() const;
  Vec2 velocity() const;
  bool any_valid() const;
};

struct Scene {
  std::string scene_id;
  std::uint64_t seed = 0;
  ScenarioTag tag = ScenarioTag::free_flow;
  AgentState ego;
  std::vector<AgentState> agents;
  Polyline route;                    // ego intended route centerline, starts at the ego
  DrivablePolygon drivable;
  // Direction field: one polyline per lane centerline; point order encodes the
  // allowed travel direction.
  std::vector<Polyline> centerlines;
};

// Rigid transform between world frame and the frame anchored at the ego
// current pose (ego at origin, heading zero).
struct FrameTransform {
  double cx = 0.0, cy = 0.0, heading = 0.0;

  Vec2 to_ego(Vec2 p) const;
  Vec2 to_world(Vec2 p) const;
  Pose2 to_ego(const Pose2& p) const;
  Pose2 to_world(const Pose2& p) const;
};

FrameTransform ego_frame_of(const Scene& s);

// All coordinates re-expressed relative to the ego current pose.
Scene ego_frame_transform(const Scene& s);

// Ground-truth ego temporal trajectory (future positions).
TrajectoryTP gt_ego_tp(const Scene& s);

// Ground-truth ego spatial trajectory: the ego path (current position plus
// future) resampled at 2 m and extrapolated along the final heading out to
// exactly P points. Falls back to a straight ray along the current heading
// when the ego barely moves.
TrajectorySP gt_ego_sp(const Scene& s);

// GT future of one agent as a point trajectory.
TrajectoryTP agent_gt_tp(const AgentState& a);

// Throws std::invalid_argument describing the first violated invariant.
void validate_scene(const Scene& s);

}  // namespace caad
