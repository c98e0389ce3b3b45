// Shared helpers for the test suites: small meshes, random connected
// graphs, and independent oracles.
#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "impsim/geodesic.hpp"
#include "impsim/mesh.hpp"
#include "impsim/rng.hpp"

namespace testutil {

// Triangulated unit cube: 8 vertices, 12 faces. Closed surface, so Euler's
// formula gives E = V + F - 2 = 18.
inline impsim::MeshFrame unit_cube() {
  impsim::MeshFrame f;
  for (int i = 0; i < 8; ++i) {
    f.vertices.push_back({static_cast<double>(i & 1), static_cast<double>((i >> 1) & 1),
                          static_cast<double>((i >> 2) & 1)});
  }
  f.faces = {
      {0, 2, 1}, {1, 2, 3},  // z = 0
      {4, 5, 6}, {5, 7, 6},  // z = 1
      {0, 1, 4}, {1, 5, 4},  // y = 0
      {2, 6, 3}, {3, 6, 7},  // y = 1
      {0, 4, 2}, {2, 4, 6},  // x = 0
      {1, 3, 5}, {3, 7, 5},  // x = 1
  };
  return f;
}

inline std::string unit_cube_obj() {
  std::ostringstream os;
  impsim::MeshFrame cube = unit_cube();
  for (const auto& v : cube.vertices) os << "v " << v.x << ' ' << v.y << ' ' << v.z << "\n";
  for (const auto& f : cube.faces) os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << "\n";
  return os.str();
}

// Unit square cycle A(0) B(1) C(2) D(3) with edges AB, BC, CD, DA;
// optionally the diagonal AC.
inline impsim::MeshGraph unit_square_graph(bool with_diagonal = false) {
  std::vector<impsim::MeshEdge> edges{{0, 1, 1.0}, {1, 2, 1.0}, {2, 3, 1.0}, {0, 3, 1.0}};
  if (with_diagonal) edges.push_back({0, 2, std::sqrt(2.0)});
  return impsim::MeshGraph::from_edges(4, edges);
}

// Random connected graph on n <= 12 vertices embedded in R^3; weights are
// Euclidean distances between the endpoint positions. A random spanning
// tree guarantees connectivity, then a few extra edges are thrown in.
inline impsim::MeshGraph random_connected_graph(impsim::Rng& rng, int max_vertices = 12) {
  int n = 2 + static_cast<int>(rng.index(static_cast<std::size_t>(max_vertices - 1)));
  std::vector<impsim::Vec3> pos(n);
  for (auto& p : pos) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};

  std::vector<impsim::MeshEdge> edges;
  auto add_edge = [&](int u, int v) {
    if (u == v) return;
    edges.push_back({u, v, impsim::distance(pos[u], pos[v])});
  };
  for (int v = 1; v < n; ++v) add_edge(v, static_cast<int>(rng.index(v)));
  int extra = static_cast<int>(rng.index(std::min(n, 7)));
  for (int e = 0; e < extra; ++e) add_edge(static_cast<int>(rng.index(n)), static_cast<int>(rng.index(n)));
  return impsim::MeshGraph::from_edges(n, edges);
}

}  // namespace testutil
