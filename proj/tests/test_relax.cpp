#include <catch2/catch_amalgamated.hpp>

#include "impsim/relax.hpp"
#include "test_util.hpp"

using namespace impsim;

namespace {

// Frame whose vertices are exactly the given points; a path over 0..n-1.
struct PathFixture {
  MeshFrame frame;
  GeodesicPath path;
};

PathFixture make_path(const std::vector<Vec3>& pts) {
  PathFixture fx;
  fx.frame.vertices = pts;
  for (std::size_t i = 0; i < pts.size(); ++i) fx.path.vertices.push_back(static_cast<int>(i));
  fx.path.length = polyline_length(pts);
  return fx;
}

double max_segment_deviation(const std::vector<Vec3>& pts) {
  double worst = 0.0;
  for (const auto& p : pts) worst = std::max(worst, point_segment_distance(p, pts.front(), pts.back()));
  return worst;
}

}  // namespace

TEST_CASE("collinear path is a fixed point", "[relax]") {
  auto fx = make_path({{0, 0, 0}, {0.25, 0, 0}, {0.5, 0, 0}, {0.75, 0, 0}, {1, 0, 0}});
  RelaxedPath r = relax_path(fx.path, fx.frame, {});
  CHECK(r.length == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(r.iterations_used <= 2);
  for (std::size_t i = 0; i < fx.frame.vertices.size(); ++i) {
    CHECK(distance(r.points[i], fx.frame.vertices[i]) < 1e-12);
  }
}

TEST_CASE("zigzag converges to the segment", "[relax]") {
  auto fx = make_path({{0, 0, 0}, {0.5, 1, 0}, {1, 0, 0}});
  RelaxConfig cfg;
  cfg.max_iters = 10000;
  RelaxedPath r = relax_path(fx.path, fx.frame, cfg);
  CHECK(r.length == Catch::Approx(1.0).margin(10 * cfg.convergence_tol));
  CHECK(r.points.front() == fx.frame.vertices.front());
  CHECK(r.points.back() == fx.frame.vertices.back());
}

TEST_CASE("two-point path returns unchanged", "[relax]") {
  auto fx = make_path({{0, 0, 0}, {0, 2, 0}});
  RelaxedPath r = relax_path(fx.path, fx.frame, {});
  CHECK(r.iterations_used == 0);
  CHECK(r.length == 2.0);
  CHECK(r.points.size() == 2);
}

TEST_CASE("paths with fewer than 2 points are rejected", "[relax]") {
  MeshFrame frame;
  frame.vertices = {{0, 0, 0}};
  GeodesicPath p{{0}, 0.0};
  CHECK_THROWS_AS(relax_path(p, frame, {}), ValidationError);
}

TEST_CASE("config validation", "[relax]") {
  auto fx = make_path({{0, 0, 0}, {0.5, 1, 0}, {1, 0, 0}});
  RelaxConfig bad;
  bad.step_size = 0.0;
  CHECK_THROWS_AS(relax_path(fx.path, fx.frame, bad), ValidationError);
  bad = {};
  bad.max_iters = 0;
  CHECK_THROWS_AS(relax_path(fx.path, fx.frame, bad), ValidationError);
  bad = {};
  bad.convergence_tol = 0.0;
  CHECK_THROWS_AS(relax_path(fx.path, fx.frame, bad), ValidationError);
}

TEST_CASE("random paths: endpoints pinned, sandwich bound, convergence", "[relax]") {
  Rng rng(4242);
  for (int trial = 0; trial < 15; ++trial) {
    std::size_t n = 3 + rng.index(62);  // up to 64 points
    std::vector<Vec3> pts(n);
    Vec3 a{0, 0, 0}, b{rng.uniform(0.5, 1.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
    for (std::size_t i = 0; i < n; ++i) {
      double t = static_cast<double>(i) / (n - 1);
      pts[i] = a + (b - a) * t + Vec3{rng.normal(0, 0.2), rng.normal(0, 0.2), rng.normal(0, 0.2)};
    }
    pts[0] = a;
    pts[n - 1] = b;
    auto fx = make_path(pts);

    RelaxConfig cfg;
    cfg.max_iters = 500000;
    RelaxedPath r = relax_path(fx.path, fx.frame, cfg);

    // endpoints bit-identical
    CHECK(r.points.front() == a);
    CHECK(r.points.back() == b);
    // straight-line <= relaxed <= raw
    CHECK(r.length <= fx.path.length + 1e-12);
    CHECK(r.length >= distance(a, b) - 1e-12);
    // unconstrained limit is the segment
    CHECK(max_segment_deviation(r.points) < 10 * cfg.convergence_tol);
  }
}

TEST_CASE("committed iterations never increase the length", "[relax]") {
  Rng rng(555);
  std::vector<Vec3> pts;
  for (int i = 0; i < 20; ++i) {
    pts.push_back({i * 0.05, rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)});
  }
  auto fx = make_path(pts);

  // step through iterations one at a time and watch the length
  double prev = fx.path.length;
  for (int iters = 1; iters <= 50; ++iters) {
    RelaxConfig cfg;
    cfg.max_iters = iters;
    cfg.convergence_tol = 1e-15;
    RelaxedPath r = relax_path(fx.path, fx.frame, cfg);
    CHECK(r.length <= prev + 1e-15);
    prev = r.length;
  }
}

TEST_CASE("surface radius keeps points near their anchors", "[relax]") {
  auto fx = make_path({{0, 0, 0}, {0.25, 0.8, 0}, {0.5, 1.0, 0}, {0.75, 0.8, 0}, {1, 0, 0}});
  RelaxConfig cfg;
  cfg.surface_radius = 0.05;
  cfg.max_iters = 5000;
  RelaxedPath r = relax_path(fx.path, fx.frame, cfg);
  for (std::size_t i = 0; i < r.points.size(); ++i) {
    CHECK(distance(r.points[i], fx.frame.vertices[i]) <= *cfg.surface_radius + 1e-12);
  }
  // constrained length still sandwiched
  CHECK(r.length <= fx.path.length + 1e-12);
  CHECK(r.length >= distance(fx.frame.vertices.front(), fx.frame.vertices.back()) - 1e-12);
}

TEST_CASE("relaxed_series: vanishing update stays near raw lengths", "[relax]") {
  MeshFrame cube = testutil::unit_cube();
  MeshFrame big = cube;
  for (auto& v : big.vertices) v = v * 1.5;
  MeshSequence seq = make_sequence({cube, big}, 30.0);

  RelaxConfig cfg;
  cfg.max_iters = 1;
  cfg.step_size = 1e-9;
  RelaxedSeries s = relaxed_series(seq, {0, 7}, cfg);
  for (std::size_t t = 0; t < s.raw_lengths.size(); ++t) {
    CHECK(std::abs(s.relaxed_lengths[t] - s.raw_lengths[t]) < 1e-6);
  }
}

TEST_CASE("relaxed_series sandwich holds per frame", "[relax]") {
  MeshFrame cube = testutil::unit_cube();
  std::vector<MeshFrame> frames;
  for (int t = 0; t < 4; ++t) {
    MeshFrame f = cube;
    for (auto& v : f.vertices) v.y *= 1.0 + 0.2 * t;
    frames.push_back(f);
  }
  MeshSequence seq = make_sequence(frames, 30.0);
  RelaxedSeries s = relaxed_series(seq, {0, 7}, {});
  for (std::size_t t = 0; t < s.raw_lengths.size(); ++t) {
    double straight = distance(seq.frames[t].vertices[0], seq.frames[t].vertices[7]);
    CHECK(s.relaxed_lengths[t] <= s.raw_lengths[t] + 1e-12);
    CHECK(s.relaxed_lengths[t] >= straight - 1e-12);
  }
}

TEST_CASE("mesh refinement changes relaxed lengths less than raw lengths", "[relax]") {
  // Open cylinder at two resolutions; electrodes at the two rim centers
  // would need caps, so use two opposite rim vertices instead.
  auto cylinder = [](int rings, int segs) {
    MeshFrame f;
    for (int r = 0; r < rings; ++r) {
      for (int s = 0; s < segs; ++s) {
        double ang = 2.0 * 3.14159265358979323846 * s / segs;
        // slight bulge so the geodesic is not a straight line
        double rad = 0.2 + 0.05 * std::sin(3.14159265358979323846 * r / (rings - 1));
        f.vertices.push_back({rad * std::cos(ang), rad * std::sin(ang), static_cast<double>(r) / (rings - 1)});
      }
    }
    for (int r = 0; r + 1 < rings; ++r) {
      for (int s = 0; s < segs; ++s) {
        int a = r * segs + s, b = r * segs + (s + 1) % segs;
        int c = (r + 1) * segs + s, d = (r + 1) * segs + (s + 1) % segs;
        f.faces.push_back({a, b, c});
        f.faces.push_back({b, d, c});
      }
    }
    return f;
  };

  RelaxConfig cfg;
  cfg.max_iters = 20000;

  auto run = [&](int rings, int segs) {
    MeshFrame f = cylinder(rings, segs);
    MeshGraph g = build_graph(f);
    ElectrodePair e{0, (rings - 1) * segs};  // same angular position, both rims
    GeodesicPath p = dijkstra(g, e);
    RelaxedPath r = relax_path(p, f, cfg);
    return std::pair<double, double>(p.length, r.length);
  };

  auto [raw_coarse, relaxed_coarse] = run(5, 8);
  auto [raw_fine, relaxed_fine] = run(9, 16);
  CHECK(std::abs(relaxed_fine - relaxed_coarse) < std::abs(raw_fine - raw_coarse));
}
