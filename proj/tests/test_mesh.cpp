#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <sstream>

#include "impsim/mesh.hpp"
#include "test_util.hpp"

using namespace impsim;

TEST_CASE("parse_obj reads vertices and faces", "[mesh]") {
  std::istringstream in(testutil::unit_cube_obj());
  MeshFrame f = parse_obj(in);
  CHECK(f.vertex_count() == 8);
  CHECK(f.face_count() == 12);
  CHECK(f.vertices[3] == Vec3{1.0, 1.0, 0.0});
}

TEST_CASE("parse_obj ignores comments, suffixes and unknown records", "[mesh]") {
  std::istringstream in(
      "# comment\n"
      "mtllib foo.mtl\n"
      "v 0 0 0\n"
      "v 1 0 0\n"
      "v 0 1 0\n"
      "vt 0.5 0.5\n"
      "vn 0 0 1\n"
      "f 1/1/1 2/2/1 3/3/1\n");
  MeshFrame f = parse_obj(in);
  CHECK(f.vertex_count() == 3);
  REQUIRE(f.face_count() == 1);
  CHECK(f.faces[0] == Face{0, 1, 2});
}

TEST_CASE("parse_obj rejects out-of-range face index with context", "[mesh]") {
  std::string text = testutil::unit_cube_obj() + "f 1 2 99\n";
  std::istringstream in(text);
  CHECK_THROWS_MATCHES(parse_obj(in), ValidationError, Catch::Matchers::MessageMatches(
                                                            Catch::Matchers::ContainsSubstring("99")));
}

TEST_CASE("parse_obj reports malformed numbers with line number", "[mesh]") {
  std::istringstream in("v 0 0 0\nv 1 zero 0\n");
  CHECK_THROWS_MATCHES(parse_obj(in), ParseError,
                       Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("line 2")));
}

TEST_CASE("quad faces fan-triangulate, larger polygons are rejected", "[mesh]") {
  std::istringstream in(
      "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
      "f 1 2 3 4\n");
  MeshFrame f = parse_obj(in);
  REQUIRE(f.face_count() == 2);
  CHECK(f.faces[0] == Face{0, 1, 2});
  CHECK(f.faces[1] == Face{0, 2, 3});

  // vertex incidence counts of a fan: first vertex appears in every triangle
  std::map<int, int> incidence;
  for (const auto& face : f.faces) {
    for (int v : face) incidence[v]++;
  }
  CHECK(incidence[0] == 2);
  CHECK(incidence[2] == 2);
  CHECK(incidence[1] == 1);
  CHECK(incidence[3] == 1);

  std::istringstream pent("v 0 0 0\nv 1 0 0\nv 2 1 0\nv 1 2 0\nv 0 1 0\nf 1 2 3 4 5\n");
  CHECK_THROWS_AS(parse_obj(pent), ValidationError);
}

TEST_CASE("frame invariants: repeated vertex and non-finite coordinates", "[mesh]") {
  std::istringstream dup("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 1 2\n");
  CHECK_THROWS_AS(parse_obj(dup), ValidationError);

  MeshFrame f = testutil::unit_cube();
  f.vertices[0].x = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(validate_frame(f), ValidationError);
}

TEST_CASE("build_graph dedupes edges: cube has 18, shared-edge pair has 5", "[mesh]") {
  MeshGraph cube = build_graph(testutil::unit_cube());
  CHECK(cube.edges().size() == 18);  // V - E + F = 2 for the closed cube

  MeshFrame two;
  two.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
  two.faces = {{0, 1, 2}, {1, 3, 2}};
  MeshGraph g = build_graph(two);
  CHECK(g.edges().size() == 5);
}

TEST_CASE("build_graph weights are the side lengths", "[mesh]") {
  MeshFrame tri;
  tri.vertices = {{0, 0, 0}, {3, 0, 0}, {3, 4, 0}};
  tri.faces = {{0, 1, 2}};
  MeshGraph g = build_graph(tri);
  REQUIRE(g.edges().size() == 3);
  std::vector<double> ws;
  for (const auto& e : g.edges()) ws.push_back(e.weight);
  std::sort(ws.begin(), ws.end());
  CHECK(ws[0] == 3.0);
  CHECK(ws[1] == 4.0);
  CHECK(ws[2] == 5.0);
}

TEST_CASE("build_graph rejects coincident vertices naming the pair", "[mesh]") {
  MeshFrame bad;
  bad.vertices = {{0, 0, 0}, {0, 0, 0}, {0, 1, 0}};
  bad.faces = {{0, 1, 2}};
  CHECK_THROWS_MATCHES(build_graph(bad), ValidationError,
                       Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("0") &&
                                                       Catch::Matchers::ContainsSubstring("1")));
}

TEST_CASE("reweight is idempotent, homogeneous and translation invariant", "[mesh]") {
  MeshFrame cube = testutil::unit_cube();
  MeshGraph g = build_graph(cube);

  SECTION("same frame: bit-identical to build_graph") {
    MeshGraph r = reweight(g, cube);
    REQUIRE(r.edges().size() == g.edges().size());
    for (std::size_t i = 0; i < g.edges().size(); ++i) {
      CHECK(r.edges()[i].u == g.edges()[i].u);
      CHECK(r.edges()[i].v == g.edges()[i].v);
      CHECK(r.edges()[i].weight == g.edges()[i].weight);  // exact
    }
  }

  SECTION("uniform scale doubles every weight") {
    MeshFrame scaled = cube;
    for (auto& v : scaled.vertices) v = v * 2.0;
    MeshGraph r = reweight(g, scaled);
    for (std::size_t i = 0; i < g.edges().size(); ++i) {
      CHECK(r.edges()[i].weight == Catch::Approx(2.0 * g.edges()[i].weight).epsilon(1e-12));
    }
  }

  SECTION("translation leaves weights unchanged") {
    MeshFrame moved = cube;
    for (auto& v : moved.vertices) v = v + Vec3{1.5, -2.0, 0.25};
    MeshGraph r = reweight(g, moved);
    for (std::size_t i = 0; i < g.edges().size(); ++i) {
      CHECK(r.edges()[i].weight == Catch::Approx(g.edges()[i].weight).epsilon(1e-12));
    }
  }

  SECTION("topology mismatch is an error") {
    MeshFrame other = cube;
    other.faces[0] = {0, 1, 3};
    CHECK_THROWS_AS(reweight(g, other), ValidationError);
  }
}

TEST_CASE("random meshes: every face contributes its sides, E <= 3F", "[mesh]") {
  Rng rng(20240811);
  for (int trial = 0; trial < 50; ++trial) {
    MeshFrame f;
    int nv = 4 + static_cast<int>(rng.index(10));
    for (int i = 0; i < nv; ++i) {
      f.vertices.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    }
    int nf = 1 + static_cast<int>(rng.index(12));
    for (int t = 0; t < nf; ++t) {
      int a = static_cast<int>(rng.index(nv)), b = static_cast<int>(rng.index(nv)), c = static_cast<int>(rng.index(nv));
      if (a == b || b == c || a == c) {
        --t;
        continue;
      }
      f.faces.push_back({a, b, c});
    }
    MeshGraph g = build_graph(f);
    CHECK(g.edges().size() <= 3 * f.faces.size());
    for (const auto& face : f.faces) {
      const int sides[3][2] = {{face[0], face[1]}, {face[1], face[2]}, {face[0], face[2]}};
      for (const auto& s : sides) {
        int u = std::min(s[0], s[1]), v = std::max(s[0], s[1]);
        bool found = false;
        for (const auto& nb : g.neighbors(u)) {
          if (nb.vertex == v) found = true;
        }
        CHECK(found);
      }
    }
    // symmetry + positivity + per-face triangle inequality
    for (const auto& e : g.edges()) CHECK(e.weight > 0.0);
    for (const auto& face : f.faces) {
      double a = distance(f.vertices[face[0]], f.vertices[face[1]]);
      double b = distance(f.vertices[face[1]], f.vertices[face[2]]);
      double c = distance(f.vertices[face[0]], f.vertices[face[2]]);
      CHECK(a <= b + c + 1e-12);
      CHECK(b <= a + c + 1e-12);
      CHECK(c <= a + b + 1e-12);
    }
  }
}

TEST_CASE("mesh sequence enforces shared topology and positive fps", "[mesh]") {
  MeshFrame cube = testutil::unit_cube();
  MeshFrame moved = cube;
  for (auto& v : moved.vertices) v = v + Vec3{0.1, 0, 0};
  CHECK_NOTHROW(make_sequence({cube, moved}, 30.0));
  CHECK_THROWS_AS(make_sequence({cube, moved}, 0.0), ValidationError);

  MeshFrame other = cube;
  other.faces.pop_back();
  CHECK_THROWS_AS(make_sequence({cube, other}, 30.0), ValidationError);
}

TEST_CASE("obj file round trip via directory loader", "[mesh]") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "impsim_mesh_rt";
  fs::create_directories(dir);
  MeshFrame cube = testutil::unit_cube();
  write_obj_file((dir / "frame_000000.obj").string(), cube);
  MeshFrame moved = cube;
  for (auto& v : moved.vertices) v = v + Vec3{0.25, 0.5, -0.125};
  write_obj_file((dir / "frame_000001.obj").string(), moved);

  MeshSequence seq = load_sequence(dir.string(), 30.0);
  REQUIRE(seq.frames.size() == 2);
  CHECK(seq.frames[1].vertices[0] == moved.vertices[0]);
  CHECK(seq.topology_id == topology_digest(cube.faces));
  fs::remove_all(dir);
}
