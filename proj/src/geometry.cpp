#include "caad/geometry.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

namespace caad::geo {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kBoundaryTol = 1e-9;

struct Interval {
  double lo, hi;
};

Interval project(const std::array<Vec2, 4>& corners, Vec2 axis) {
  double lo = dot(corners[0], axis), hi = lo;
  for (int i = 1; i < 4; ++i) {
    const double t = dot(corners[static_cast<std::size_t>(i)], axis);
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  return {lo, hi};
}
}  // namespace

double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

std::array<Vec2, 4> rect_corners(const Pose2& pose, const Footprint& fp) {
  const Vec2 ax{std::cos(pose.heading), std::sin(pose.heading)};
  const Vec2 ay{-ax.y, ax.x};
  const Vec2 c{pose.x, pose.y};
  const Vec2 ex = ax * (fp.length * 0.5);
  const Vec2 ey = ay * (fp.width * 0.5);
  return {c + ex + ey, c + ex - ey, c - ex - ey, c - ex + ey};
}

double rect_overlap_margin(const Pose2& pa, const Footprint& fa, const Pose2& pb,
                           const Footprint& fb) {
  if (fa.length <= 0 || fa.width <= 0 || fb.length <= 0 || fb.width <= 0)
    throw std::invalid_argument("rect_overlap: footprint dimensions must be positive");
  const auto ca = rect_corners(pa, fa);
  const auto cb = rect_corners(pb, fb);
  const std::array<Vec2, 4> axes = {
      Vec2{std::cos(pa.heading), std::sin(pa.heading)},
      Vec2{-std::sin(pa.heading), std::cos(pa.heading)},
      Vec2{std::cos(pb.heading), std::sin(pb.heading)},
      Vec2{-std::sin(pb.heading), std::cos(pb.heading)},
  };
  double margin = std::numeric_limits<double>::infinity();
  for (const Vec2& axis : axes) {
    const Interval ia = project(ca, axis);
    const Interval ib = project(cb, axis);
    margin = std::min(margin, std::min(ia.hi, ib.hi) - std::max(ia.lo, ib.lo));
  }
  return margin;
}

bool rect_overlap(const Pose2& pa, const Footprint& fa, const Pose2& pb, const Footprint& fb) {
  return rect_overlap_margin(pa, fa, pb, fb) >= 0.0;
}

double Polyline::length() const {
  double acc = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) acc += dist(pts[i - 1], pts[i]);
  return acc;
}

void Polyline::validate() const {
  if (pts.size() < 2) throw std::invalid_argument("Polyline: need at least 2 points");
  for (std::size_t i = 1; i < pts.size(); ++i)
    if (dist(pts[i - 1], pts[i]) <= 1e-9)
      throw std::invalid_argument("Polyline: coincident consecutive points at index " +
                                  std::to_string(i));
}

double DrivablePolygon::signed_area() const {
  double acc = 0.0;
  for (std::size_t i = 0; i < verts.size(); ++i) {
    const Vec2& a = verts[i];
    const Vec2& b = verts[(i + 1) % verts.size()];
    acc += cross(a, b);
  }
  return 0.5 * acc;
}

namespace {
bool segments_properly_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const double d1 = cross(b - a, c - a);
  const double d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c);
  const double d4 = cross(d - c, b - c);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}
}  // namespace

void DrivablePolygon::validate() const {
  if (verts.size() < 3) throw std::invalid_argument("DrivablePolygon: need at least 3 vertices");
  if (signed_area() <= 0.0)
    throw std::invalid_argument("DrivablePolygon: vertices must be counterclockwise with positive area");
  const std::size_t n = verts.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (dist(verts[i], verts[(i + 1) % n]) <= 1e-9)
      throw std::invalid_argument("DrivablePolygon: degenerate edge at index " + std::to_string(i));
    for (std::size_t j = i + 1; j < n; ++j) {
      // skip adjacent edges (they share an endpoint)
      if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
      if (segments_properly_intersect(verts[i], verts[(i + 1) % n], verts[j], verts[(j + 1) % n]))
        throw std::invalid_argument("DrivablePolygon: self-intersecting edges " + std::to_string(i) +
                                    " and " + std::to_string(j));
    }
  }
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 == 0.0) return dist(p, a);
  const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return dist(p, a + ab * t);
}

bool point_in_polygon(Vec2 p, const DrivablePolygon& poly) {
  if (poly.verts.size() < 3) throw std::invalid_argument("point_in_polygon: degenerate polygon");
  const std::size_t n = poly.verts.size();
  // boundary band counts as inside
  for (std::size_t i = 0; i < n; ++i)
    if (point_segment_distance(p, poly.verts[i], poly.verts[(i + 1) % n]) <= kBoundaryTol) return true;
  // even-odd crossing test with a horizontal ray towards +x
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly.verts[i];
    const Vec2& b = poly.verts[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double xint = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
      if (p.x < xint) inside = !inside;
    }
  }
  return inside;
}

ResampleResult resample_arclength(const Polyline& path, double spacing) {
  if (spacing <= 0.0) throw std::invalid_argument("resample_arclength: spacing must be positive");
  path.validate();
  const double total = path.length();
  ResampleResult out;
  if (total < spacing) {
    out.too_short = true;
    out.line.pts = {path.pts.front(), path.pts.back()};
    return out;
  }
  out.line.pts.push_back(path.pts.front());
  double target = spacing;
  double walked = 0.0;
  std::size_t seg = 0;
  while (seg + 1 < path.pts.size()) {
    const Vec2 a = path.pts[seg];
    const Vec2 b = path.pts[seg + 1];
    const double seg_len = dist(a, b);
    while (target <= walked + seg_len + 1e-12 && target <= total + 1e-12) {
      const double t = (target - walked) / seg_len;
      out.line.pts.push_back(a + (b - a) * t);
      target += spacing;
    }
    walked += seg_len;
    ++seg;
  }
  // final residual point when total length is not a multiple of spacing
  if (dist(out.line.pts.back(), path.pts.back()) > 1e-9) out.line.pts.push_back(path.pts.back());
  return out;
}

double path_min_distance(const std::vector<Vec2>& traj_points, const Polyline& path) {
  if (traj_points.empty()) throw std::invalid_argument("path_min_distance: empty trajectory");
  path.validate();
  double best = std::numeric_limits<double>::infinity();
  for (const Vec2& p : traj_points)
    for (std::size_t i = 1; i < path.pts.size(); ++i)
      best = std::min(best, point_segment_distance(p, path.pts[i - 1], path.pts[i]));
  return best;
}

double progress_along(const Polyline& path, Vec2 p) {
  path.validate();
  double best = std::numeric_limits<double>::infinity();
  double best_s = 0.0;
  double walked = 0.0;
  for (std::size_t i = 1; i < path.pts.size(); ++i) {
    const Vec2 a = path.pts[i - 1];
    const Vec2 b = path.pts[i];
    const Vec2 ab = b - a;
    const double len2 = dot(ab, ab);
    const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
    const double d = dist(p, a + ab * t);
    const double seg_len = std::sqrt(len2);
    if (d < best - 1e-12) {
      best = d;
      best_s = walked + t * seg_len;
    }
    walked += seg_len;
  }
  return best_s;
}

}  // namespace caad::geo
