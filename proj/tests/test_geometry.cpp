#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "caad/geometry.hpp"
#include "caad/rng.hpp"

using namespace caad;
using geo::DrivablePolygon;
using geo::Footprint;
using geo::Polyline;
using geo::Pose2;
using geo::Vec2;

namespace {

// Independent overlap oracle: sample every rectangle edge at 1 cm (corners
// included) and test containment both ways with a crossing-number test that
// shares no code with the SAT implementation.
bool point_in_quad(Vec2 p, const std::array<Vec2, 4>& q) {
  bool inside = false;
  for (std::size_t i = 0, j = 3; i < 4; j = i++) {
    if ((q[i].y > p.y) != (q[j].y > p.y)) {
      const double xint = q[i].x + (p.y - q[i].y) / (q[j].y - q[i].y) * (q[j].x - q[i].x);
      if (p.x < xint) inside = !inside;
    }
  }
  return inside;
}

bool overlap_oracle(const Pose2& pa, const Footprint& fa, const Pose2& pb, const Footprint& fb) {
  const auto ca = geo::rect_corners(pa, fa);
  const auto cb = geo::rect_corners(pb, fb);
  auto edge_samples_inside = [](const std::array<Vec2, 4>& rect, const std::array<Vec2, 4>& other) {
    for (int e = 0; e < 4; ++e) {
      const Vec2 a = rect[static_cast<std::size_t>(e)];
      const Vec2 b = rect[static_cast<std::size_t>((e + 1) % 4)];
      const int n = std::max(1, static_cast<int>(std::ceil(geo::dist(a, b) / 0.01)));
      for (int s = 0; s <= n; ++s) {
        const double t = static_cast<double>(s) / n;
        if (point_in_quad(a + (b - a) * t, other)) return true;
      }
    }
    return false;
  };
  return edge_samples_inside(ca, cb) || edge_samples_inside(cb, ca);
}

// Independent winding-number point-in-polygon oracle.
bool winding_oracle(Vec2 p, const DrivablePolygon& poly) {
  double angle = 0.0;
  const std::size_t n = poly.verts.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = poly.verts[i] - p;
    const Vec2 b = poly.verts[(i + 1) % n] - p;
    angle += std::atan2(geo::cross(a, b), geo::dot(a, b));
  }
  return std::abs(angle) > 3.141592653589793;
}

double boundary_distance(Vec2 p, const DrivablePolygon& poly) {
  double best = 1e18;
  const std::size_t n = poly.verts.size();
  for (std::size_t i = 0; i < n; ++i)
    best = std::min(best, geo::point_segment_distance(p, poly.verts[i], poly.verts[(i + 1) % n]));
  return best;
}

DrivablePolygon random_convexish_polygon(Rng& rng) {
  // star-shaped polygon around the origin: always simple, CCW
  const int n = 5 + rng.uniform_int(5);
  std::vector<Vec2> verts;
  for (int i = 0; i < n; ++i) {
    const double ang = 2.0 * 3.141592653589793 * i / n;
    const double r = rng.uniform(2.0, 8.0);
    verts.push_back({r * std::cos(ang), r * std::sin(ang)});
  }
  return DrivablePolygon{verts};
}

}  // namespace

TEST_CASE("rect_overlap trivial cases") {
  Pose2 p{0, 0, 0.3};
  Footprint f{4.5, 1.9};
  CHECK(geo::rect_overlap(p, f, p, f));
  CHECK_FALSE(geo::rect_overlap(p, f, Pose2{100, 0, 0}, Footprint{5, 5}));
  CHECK_THROWS_AS(geo::rect_overlap(p, Footprint{0, 1}, p, f), std::invalid_argument);
}

TEST_CASE("rect_overlap is symmetric and rigid-transform invariant") {
  Rng rng(21);
  for (int i = 0; i < 200; ++i) {
    Pose2 a{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-3.14, 3.14)};
    Pose2 b{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-3.14, 3.14)};
    Footprint fa{rng.uniform(1, 5), rng.uniform(1, 3)};
    Footprint fb{rng.uniform(1, 5), rng.uniform(1, 3)};
    CHECK(geo::rect_overlap(a, fa, b, fb) == geo::rect_overlap(b, fb, a, fa));

    const double th = rng.uniform(-3.14, 3.14);
    const double tx = rng.uniform(-20, 20), ty = rng.uniform(-20, 20);
    auto xform = [&](const Pose2& p) {
      return Pose2{tx + p.x * std::cos(th) - p.y * std::sin(th),
                   ty + p.x * std::sin(th) + p.y * std::cos(th), geo::wrap_angle(p.heading + th)};
    };
    // skip near-tangent configurations where a rigid transform can flip the
    // touching verdict through rounding
    if (std::abs(geo::rect_overlap_margin(a, fa, b, fb)) > 1e-9)
      CHECK(geo::rect_overlap(a, fa, b, fb) == geo::rect_overlap(xform(a), fa, xform(b), fb));
  }
}

TEST_CASE("rect_overlap agrees with the boundary-sampling oracle on 1000 random pairs") {
  Rng rng(42);
  int checked = 0;
  for (int i = 0; i < 1000; ++i) {
    Pose2 a{rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-3.14, 3.14)};
    Pose2 b{rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-3.14, 3.14)};
    Footprint fa{rng.uniform(1.0, 5.0), rng.uniform(0.8, 2.5)};
    Footprint fb{rng.uniform(1.0, 5.0), rng.uniform(0.8, 2.5)};
    // skip the boundary band and penetrations finer than the 1 cm sampling
    if (std::abs(geo::rect_overlap_margin(a, fa, b, fb)) < 0.02) continue;
    ++checked;
    CHECK(geo::rect_overlap(a, fa, b, fb) == overlap_oracle(a, fa, b, fb));
  }
  CHECK(checked > 700);
}

TEST_CASE("point_in_polygon trivial cases") {
  DrivablePolygon tri{{{0, 0}, {4, 0}, {2, 3}}};
  CHECK(geo::point_in_polygon({2, 1}, tri));
  CHECK_FALSE(geo::point_in_polygon({10, 10}, tri));
  CHECK(geo::point_in_polygon({2, 0}, tri));  // boundary counts as inside
  DrivablePolygon bad{{{0, 0}, {1, 0}}};
  CHECK_THROWS_AS(geo::point_in_polygon({0, 0}, bad), std::invalid_argument);
  DrivablePolygon cw{{{0, 0}, {0, 1}, {1, 1}, {1, 0}}};
  CHECK_THROWS_AS(cw.validate(), std::invalid_argument);
}

TEST_CASE("point_in_polygon agrees with an independent winding oracle on 1000 points") {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const DrivablePolygon poly = random_convexish_polygon(rng);
    poly.validate();
    for (int i = 0; i < 100; ++i) {
      const Vec2 p{rng.uniform(-10, 10), rng.uniform(-10, 10)};
      if (boundary_distance(p, poly) < 1e-6) continue;
      CHECK(geo::point_in_polygon(p, poly) == winding_oracle(p, poly));
    }
  }
}

TEST_CASE("resample_arclength straight segment") {
  Polyline line{{{0, 0}, {10, 0}}};
  const auto res = geo::resample_arclength(line, 2.0);
  CHECK_FALSE(res.too_short);
  REQUIRE(res.line.pts.size() == 6);
  for (int i = 0; i < 6; ++i) CHECK(res.line.pts[static_cast<std::size_t>(i)].x == doctest::Approx(2.0 * i));

  const auto whole = geo::resample_arclength(line, 10.0);
  CHECK(whole.line.pts.size() == 2);

  const auto short_res = geo::resample_arclength(Polyline{{{0, 0}, {1, 0}}}, 5.0);
  CHECK(short_res.too_short);
  CHECK(short_res.line.pts.size() == 2);
}

TEST_CASE("resample_arclength spacing property on random smooth paths") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Polyline path;
    double x = 0, y = 0, h = rng.uniform(-0.5, 0.5);
    path.pts.push_back({x, y});
    for (int i = 0; i < 60; ++i) {
      h += rng.uniform(-0.15, 0.15);
      x += 0.5 * std::cos(h);
      y += 0.5 * std::sin(h);
      path.pts.push_back({x, y});
    }
    const double spacing = rng.uniform(0.8, 3.0);
    const auto res = geo::resample_arclength(path, spacing);
    for (std::size_t i = 1; i + 1 < res.line.pts.size(); ++i) {
      // chord length can only fall short of arc length on curved segments
      const double d = geo::dist(res.line.pts[i - 1], res.line.pts[i]);
      CHECK(d <= spacing + 1e-9);
      CHECK(d > 0.0);
    }
    // length is reproduced within one spacing
    CHECK(std::abs(res.line.length() - path.length()) < spacing + 1e-9);
    // straight-path spacing is exact
  }
  Polyline straight{{{0, 0}, {3.7, 0}, {17.2, 0}}};
  const auto res = geo::resample_arclength(straight, 1.3);
  for (std::size_t i = 1; i + 1 < res.line.pts.size(); ++i)
    CHECK(std::abs(geo::dist(res.line.pts[i - 1], res.line.pts[i]) - 1.3) < 1e-9);
}

TEST_CASE("path_min_distance trivial and oracle cases") {
  Polyline path{{{0, 0}, {20, 0}}};
  CHECK(geo::path_min_distance({{5, 0}}, path) == doctest::Approx(0.0));
  CHECK(geo::path_min_distance({{5, 3}}, path) == doctest::Approx(3.0));

  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    Polyline p;
    double x = rng.uniform(-5, 5), y = rng.uniform(-5, 5), h = rng.uniform(-3, 3);
    p.pts.push_back({x, y});
    for (int i = 0; i < 10; ++i) {
      h += rng.uniform(-0.4, 0.4);
      x += rng.uniform(0.5, 2.0) * std::cos(h);
      y += rng.uniform(0.5, 2.0) * std::sin(h);
      p.pts.push_back({x, y});
    }
    std::vector<Vec2> traj;
    for (int i = 0; i < 5; ++i) traj.push_back({rng.uniform(-8, 12), rng.uniform(-8, 12)});
    const double fast = geo::path_min_distance(traj, p);
    // dense 1 mm sampling oracle
    double oracle = 1e18;
    for (std::size_t i = 1; i < p.pts.size(); ++i) {
      const double len = geo::dist(p.pts[i - 1], p.pts[i]);
      const int n = std::max(1, static_cast<int>(std::ceil(len / 0.001)));
      for (int s = 0; s <= n; ++s) {
        const Vec2 q = p.pts[i - 1] + (p.pts[i] - p.pts[i - 1]) * (static_cast<double>(s) / n);
        for (const Vec2& t : traj) oracle = std::min(oracle, geo::dist(t, q));
      }
    }
    CHECK(fast <= oracle + 1e-12);
    CHECK(fast >= oracle - 1e-3);
  }
}

TEST_CASE("progress_along endpoints and midpoint") {
  Polyline path{{{0, 0}, {10, 0}}};
  CHECK(geo::progress_along(path, {0, 0}) == doctest::Approx(0.0));
  CHECK(geo::progress_along(path, {10, 0}) == doctest::Approx(10.0));
  CHECK(geo::progress_along(path, {5, 0}) == doctest::Approx(5.0));
  CHECK(geo::progress_along(path, {5, 2}) == doctest::Approx(5.0));
}

TEST_CASE("progress_along is monotone along points sampled in path order") {
  Rng rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    Polyline p;
    double x = 0, y = 0, h = rng.uniform(-0.3, 0.3);
    p.pts.push_back({x, y});
    for (int i = 0; i < 25; ++i) {
      h += rng.uniform(-0.2, 0.2);
      x += 1.0 * std::cos(h);
      y += 1.0 * std::sin(h);
      p.pts.push_back({x, y});
    }
    double prev = -1.0;
    const auto res = geo::resample_arclength(p, 0.37);
    for (const Vec2& q : res.line.pts) {
      const double s = geo::progress_along(p, q);
      CHECK(s >= prev - 1e-9);
      prev = s;
    }
  }
}

TEST_CASE("polyline and polygon validation") {
  const Polyline single{{{0, 0}}};
  CHECK_THROWS_AS(single.validate(), std::invalid_argument);
  const Polyline dup{{{0, 0}, {0, 0}}};
  CHECK_THROWS_AS(dup.validate(), std::invalid_argument);
  DrivablePolygon self_cross{{{0, 0}, {4, 4}, {4, 0}, {0, 4}}};
  CHECK_THROWS_AS(self_cross.validate(), std::invalid_argument);
  DrivablePolygon ok{{{0, 0}, {4, 0}, {4, 4}, {0, 4}}};
  ok.validate();
  CHECK(ok.signed_area() == doctest::Approx(16.0));
}
