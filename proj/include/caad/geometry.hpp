#pragma once

#include <array>
#include <cmath>
#include <vector>

namespace caad::geo {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double dist(Vec2 a, Vec2 b) { return norm(a - b); }

// normalize an angle to (-pi, pi]
double wrap_angle(double a);

struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians in (-pi, pi]

  Vec2 position() const { return {x, y}; }
};

struct Footprint {
  double length = 4.5;  // along heading, meters
  double width = 1.9;
};

// Corners of the oriented rectangle centered at `pose`.
std::array<Vec2, 4> rect_corners(const Pose2& pose, const Footprint& fp);

// Separating-axis overlap test for two oriented rectangles. Touching counts
// as overlap. Symmetric in its arguments.
bool rect_overlap(const Pose2& pa, const Footprint& fa, const Pose2& pb, const Footprint& fb);

// Signed penetration depth: positive when overlapping (minimum translation
// distance), negative when separated (axis gap). Used to classify borderline
// cases in oracle comparisons.
double rect_overlap_margin(const Pose2& pa, const Footprint& fa, const Pose2& pb,
                           const Footprint& fb);

struct Polyline {
  std::vector<Vec2> pts;

  double length() const;
  // throws std::invalid_argument when fewer than 2 points or consecutive
  // points closer than 1e-9 m
  void validate() const;
};

struct DrivablePolygon {
  std::vector<Vec2> verts;  // counterclockwise, simple

  double signed_area() const;
  // throws std::invalid_argument when degenerate: <3 vertices, clockwise,
  // or self-intersecting
  void validate() const;
};

// Boundary points (within 1e-9 m) count as inside.
bool point_in_polygon(Vec2 p, const DrivablePolygon& poly);

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b);

struct ResampleResult {
  Polyline line;
  bool too_short = false;  // input shorter than one spacing: endpoints only
};

// Points at arc-length multiples of `spacing` from the start, linearly
// interpolated; the first point is preserved and the path endpoint is
// appended as a final residual when the total length is not a multiple.
ResampleResult resample_arclength(const Polyline& path, double spacing);

// Minimum Euclidean distance from any of `traj_points` to any segment of `path`.
double path_min_distance(const std::vector<Vec2>& traj_points, const Polyline& path);

// Arc-length coordinate of the closest projection of p onto the path.
// Ties resolve to the earliest segment so that progress is monotone along
// points sampled in path order.
double progress_along(const Polyline& path, Vec2 p);

}  // namespace caad::geo
