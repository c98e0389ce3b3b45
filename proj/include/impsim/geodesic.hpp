// Shortest conductive paths on the mesh edge graph.
//
// dijkstra() is the production path; brute_force_shortest() enumerates all
// simple paths on small graphs and exists purely to verify dijkstra. Both
// apply the same deterministic tie-break: among equal-length paths, the one
// whose predecessor chain (read from the sink backwards) is lexicographically
// smallest by vertex index.
#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <queue>
#include <string>
#include <vector>

#include "impsim/error.hpp"
#include "impsim/mesh.hpp"

namespace impsim {

struct ElectrodePair {
  int source = 0;
  int sink = 0;
};

struct GeodesicPath {
  std::vector<int> vertices;  // source first, sink last
  double length = 0.0;        // meters
};

inline void check_electrodes(const MeshGraph& graph, ElectrodePair e) {
  if (e.source < 0 || e.source >= graph.vertex_count() || e.sink < 0 || e.sink >= graph.vertex_count()) {
    throw ValidationError("electrode index out of range: source " + std::to_string(e.source) + ", sink " +
                          std::to_string(e.sink) + ", vertex count " + std::to_string(graph.vertex_count()));
  }
}

// Single-target Dijkstra with lazy deletion; stale queue entries are skipped
// on pop and the search exits once the sink is settled. Relaxation follows
// d[v] <- min(d[v], d[u] + dist(u, v)); on exact distance ties the smaller
// predecessor index wins, which yields the lexicographic path rule because
// all equal-length predecessors settle before v does (edge weights are
// strictly positive).
inline GeodesicPath dijkstra(const MeshGraph& graph, ElectrodePair electrodes) {
  check_electrodes(graph, electrodes);
  const int n = graph.vertex_count();
  const int src = electrodes.source, snk = electrodes.sink;
  if (src == snk) return {{src}, 0.0};

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(n, inf);
  std::vector<int> pred(n, -1);
  std::vector<char> settled(n, 0);

  using Entry = std::pair<double, int>;  // (distance, vertex)
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  dist[src] = 0.0;
  queue.push({0.0, src});

  while (!queue.empty()) {
    auto [d, u] = queue.top();
    queue.pop();
    if (settled[u] || d != dist[u]) continue;
    settled[u] = 1;
    if (u == snk) break;
    for (const auto& nb : graph.neighbors(u)) {
      double nd = d + nb.weight;
      if (nd < dist[nb.vertex]) {
        dist[nb.vertex] = nd;
        pred[nb.vertex] = u;
        queue.push({nd, nb.vertex});
      } else if (nd == dist[nb.vertex] && u < pred[nb.vertex]) {
        pred[nb.vertex] = u;
      }
    }
  }

  if (!settled[snk]) {
    throw UnreachableError("no path from vertex " + std::to_string(src) + " to vertex " + std::to_string(snk));
  }

  GeodesicPath path;
  for (int v = snk; v != -1; v = pred[v]) path.vertices.push_back(v);
  std::reverse(path.vertices.begin(), path.vertices.end());
  path.length = dist[snk];
  return path;
}

namespace detail {

// Predecessor chain used for tie-breaking: the path reversed, sink omitted.
inline std::vector<int> predecessor_chain(const std::vector<int>& path) {
  std::vector<int> chain(path.rbegin() + 1, path.rend());
  return chain;
}

}  // namespace detail

// Exhaustive simple-path enumeration, limited to 12 vertices. Same
// tie-break as dijkstra. DFS visits neighbors in ascending index order and
// prunes once the partial length reaches the incumbent (weights are
// positive, so no extension can tie or beat it).
inline GeodesicPath brute_force_shortest(const MeshGraph& graph, ElectrodePair electrodes) {
  check_electrodes(graph, electrodes);
  if (graph.vertex_count() > 12) {
    throw ValidationError("brute_force_shortest is limited to 12 vertices, got " +
                          std::to_string(graph.vertex_count()));
  }
  const int src = electrodes.source, snk = electrodes.sink;
  if (src == snk) return {{src}, 0.0};

  std::vector<int> current{src};
  std::vector<char> visited(graph.vertex_count(), 0);
  visited[src] = 1;

  bool found = false;
  double best_len = std::numeric_limits<double>::infinity();
  std::vector<int> best_path;
  std::vector<int> best_chain;

  auto consider = [&](double len) {
    std::vector<int> chain = detail::predecessor_chain(current);
    if (!found || len < best_len || (len == best_len && chain < best_chain)) {
      found = true;
      best_len = len;
      best_path = current;
      best_chain = std::move(chain);
    }
  };

  std::function<void(int, double)> dfs = [&](int u, double len) {
    if (u == snk) {
      consider(len);
      return;
    }
    for (const auto& nb : graph.neighbors(u)) {
      if (visited[nb.vertex]) continue;
      double nl = len + nb.weight;
      if (found && nl > best_len) continue;
      visited[nb.vertex] = 1;
      current.push_back(nb.vertex);
      dfs(nb.vertex, nl);
      current.pop_back();
      visited[nb.vertex] = 0;
    }
  };
  dfs(src, 0.0);

  if (!found) {
    throw UnreachableError("no path from vertex " + std::to_string(src) + " to vertex " + std::to_string(snk));
  }
  return {best_path, best_len};
}

struct PathSeries {
  std::vector<double> lengths;            // one raw geodesic length per frame
  std::vector<std::vector<int>> chains;   // per-frame vertex chains, kept for relaxation
};

// Frame-wise shortest paths over a sequence. The topology graph is built
// once and reweighted per frame. Frames are processed in index order; the
// result depends only on the inputs.
inline PathSeries path_series(const MeshSequence& sequence, ElectrodePair electrodes) {
  if (sequence.frames.empty()) throw ValidationError("empty mesh sequence");
  MeshGraph base = build_graph(sequence.frames[0]);
  check_electrodes(base, electrodes);

  PathSeries out;
  out.lengths.reserve(sequence.frames.size());
  out.chains.reserve(sequence.frames.size());
  for (std::size_t t = 0; t < sequence.frames.size(); ++t) {
    try {
      MeshGraph g = (t == 0) ? base : reweight(base, sequence.frames[t]);
      GeodesicPath p = dijkstra(g, electrodes);
      out.lengths.push_back(p.length);
      out.chains.push_back(std::move(p.vertices));
    } catch (const UnreachableError& e) {
      throw UnreachableError("frame " + std::to_string(t) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("frame " + std::to_string(t) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace impsim
