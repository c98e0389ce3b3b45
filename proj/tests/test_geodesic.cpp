#include <catch2/catch_amalgamated.hpp>

#include "impsim/geodesic.hpp"
#include "impsim/relax.hpp"
#include "test_util.hpp"

using namespace impsim;

TEST_CASE("dijkstra: source equals sink", "[geodesic]") {
  MeshGraph g = testutil::unit_square_graph();
  GeodesicPath p = dijkstra(g, {2, 2});
  CHECK(p.vertices == std::vector<int>{2});
  CHECK(p.length == 0.0);
}

TEST_CASE("dijkstra on the unit square: tie-break picks A,B,C", "[geodesic]") {
  MeshGraph g = testutil::unit_square_graph();
  GeodesicPath p = dijkstra(g, {0, 2});
  CHECK(p.length == Catch::Approx(2.0).margin(0));
  CHECK(p.vertices == std::vector<int>{0, 1, 2});

  // exhaustive enumeration agrees
  GeodesicPath q = brute_force_shortest(g, {0, 2});
  CHECK(q.length == p.length);
  CHECK(q.vertices == p.vertices);
}

TEST_CASE("dijkstra with the diagonal prefers sqrt(2)", "[geodesic]") {
  MeshGraph g = testutil::unit_square_graph(true);
  GeodesicPath p = dijkstra(g, {0, 2});
  CHECK(p.length == Catch::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(p.vertices == std::vector<int>{0, 2});
  GeodesicPath q = brute_force_shortest(g, {0, 2});
  CHECK(q.length == p.length);
  CHECK(q.vertices == p.vertices);
}

TEST_CASE("unreachable sink names both vertices", "[geodesic]") {
  // two disconnected triangles
  std::vector<MeshEdge> edges{{0, 1, 1}, {1, 2, 1}, {0, 2, 1}, {3, 4, 1}, {4, 5, 1}, {3, 5, 1}};
  MeshGraph g = MeshGraph::from_edges(6, edges);
  CHECK_THROWS_MATCHES(dijkstra(g, {0, 5}), UnreachableError,
                       Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("0") &&
                                                       Catch::Matchers::ContainsSubstring("5")));
  CHECK_THROWS_AS(brute_force_shortest(g, {0, 5}), UnreachableError);
}

TEST_CASE("electrode index validation", "[geodesic]") {
  MeshGraph g = testutil::unit_square_graph();
  CHECK_THROWS_AS(dijkstra(g, {0, 9}), ValidationError);
  CHECK_THROWS_AS(dijkstra(g, {-1, 2}), ValidationError);
}

TEST_CASE("brute force rejects graphs over the vertex budget", "[geodesic]") {
  std::vector<MeshEdge> edges;
  for (int i = 0; i + 1 < 13; ++i) edges.push_back({i, i + 1, 1.0});
  MeshGraph g = MeshGraph::from_edges(13, edges);
  CHECK_THROWS_AS(brute_force_shortest(g, {0, 12}), ValidationError);
}

TEST_CASE("oracle equivalence on random connected graphs", "[geodesic]") {
  Rng rng(977);
  for (int trial = 0; trial < 300; ++trial) {
    MeshGraph g = testutil::random_connected_graph(rng);
    int n = g.vertex_count();
    int s = static_cast<int>(rng.index(n));
    int t = static_cast<int>(rng.index(n));
    GeodesicPath fast = dijkstra(g, {s, t});
    GeodesicPath slow = brute_force_shortest(g, {s, t});
    REQUIRE(fast.length == slow.length);  // exact
    REQUIRE(fast.vertices == slow.vertices);
  }
}

TEST_CASE("path length bounds and edge monotonicity", "[geodesic]") {
  Rng rng(31337);
  for (int trial = 0; trial < 100; ++trial) {
    // embed, remember positions to check the straight-line lower bound
    int n = 4 + static_cast<int>(rng.index(8));
    std::vector<Vec3> pos(n);
    for (auto& p : pos) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    std::vector<MeshEdge> edges;
    for (int v = 1; v < n; ++v) {
      int u = static_cast<int>(rng.index(v));
      edges.push_back({u, v, distance(pos[u], pos[v])});
    }
    for (int e = 0; e < 3; ++e) {
      int u = static_cast<int>(rng.index(n)), v = static_cast<int>(rng.index(n));
      if (u != v) edges.push_back({u, v, distance(pos[u], pos[v])});
    }
    MeshGraph g = MeshGraph::from_edges(n, edges);
    int s = static_cast<int>(rng.index(n)), t = static_cast<int>(rng.index(n));
    GeodesicPath p = dijkstra(g, {s, t});
    CHECK(p.length >= distance(pos[s], pos[t]) - 1e-12);

    // removing an edge not on the path leaves the result unchanged
    if (g.edges().size() > static_cast<std::size_t>(n)) {
      std::vector<MeshEdge> pruned;
      bool removed = false;
      for (const auto& e : g.edges()) {
        bool on_path = false;
        for (std::size_t i = 0; i + 1 < p.vertices.size(); ++i) {
          int a = std::min(p.vertices[i], p.vertices[i + 1]);
          int b = std::max(p.vertices[i], p.vertices[i + 1]);
          if (e.u == a && e.v == b) on_path = true;
        }
        if (!removed && !on_path) {
          removed = true;  // drop one non-path edge
          continue;
        }
        pruned.push_back(e);
      }
      if (removed) {
        MeshGraph g2 = MeshGraph::from_edges(n, pruned);
        bool still_connected = true;
        GeodesicPath p2;
        try {
          p2 = dijkstra(g2, {s, t});
        } catch (const UnreachableError&) {
          still_connected = false;
        }
        if (still_connected) {
          CHECK(p2.length >= p.length - 1e-15);
          CHECK(p2.vertices == p.vertices);
        }
      }
    }

    // adding an edge never increases the length
    int u = static_cast<int>(rng.index(n)), v = static_cast<int>(rng.index(n));
    if (u != v) {
      auto plus = g.edges();
      plus.push_back({u, v, distance(pos[u], pos[v])});
      MeshGraph g3 = MeshGraph::from_edges(n, plus);
      GeodesicPath p3 = dijkstra(g3, {s, t});
      CHECK(p3.length <= p.length + 1e-15);
    }
  }
}

TEST_CASE("dijkstra determinism", "[geodesic]") {
  Rng rng(7);
  MeshGraph g = testutil::random_connected_graph(rng);
  GeodesicPath a = dijkstra(g, {0, g.vertex_count() - 1});
  GeodesicPath b = dijkstra(g, {0, g.vertex_count() - 1});
  CHECK(a.vertices == b.vertices);
  CHECK(a.length == b.length);
}

TEST_CASE("path_series basics", "[geodesic]") {
  MeshFrame cube = testutil::unit_cube();

  SECTION("static sequence yields identical lengths") {
    MeshSequence seq = make_sequence({cube, cube, cube, cube, cube}, 30.0);
    PathSeries s = path_series(seq, {0, 7});
    REQUIRE(s.lengths.size() == 5);
    for (double v : s.lengths) CHECK(v == s.lengths[0]);
  }

  SECTION("uniform scaling scales the length") {
    MeshFrame big = cube;
    for (auto& v : big.vertices) v = v * 3.0;
    MeshSequence seq = make_sequence({cube, big}, 30.0);
    PathSeries s = path_series(seq, {0, 7});
    CHECK(s.lengths[1] == Catch::Approx(3.0 * s.lengths[0]).epsilon(1e-12));
  }

  SECTION("matches frame-by-frame dijkstra") {
    // three frames with progressively squeezed cube
    std::vector<MeshFrame> frames;
    for (int t = 0; t < 3; ++t) {
      MeshFrame f = cube;
      for (auto& v : f.vertices) v.z *= 1.0 + 0.25 * t;
      frames.push_back(f);
    }
    MeshSequence seq = make_sequence(frames, 30.0);
    PathSeries s = path_series(seq, {0, 7});
    for (int t = 0; t < 3; ++t) {
      GeodesicPath p = dijkstra(build_graph(seq.frames[t]), {0, 7});
      CHECK(s.lengths[t] == p.length);
      CHECK(s.chains[t] == p.vertices);
    }
  }
}
