// Triangle-mesh containers and the Euclidean-weighted edge graph.
//
// A MeshSequence is a fixed-topology mesh whose vertices move over time.
// Geometry is kept in double precision throughout: the signal of interest
// is the frame-to-frame difference of path lengths, which single floats
// would visibly distort.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "impsim/csv.hpp"
#include "impsim/digest.hpp"
#include "impsim/error.hpp"
#include "impsim/geometry.hpp"

namespace impsim {

using Face = std::array<int, 3>;

struct MeshFrame {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int face_count() const { return static_cast<int>(faces.size()); }
};

inline void validate_frame(const MeshFrame& frame) {
  const int nv = frame.vertex_count();
  for (std::size_t i = 0; i < frame.vertices.size(); ++i) {
    const Vec3& v = frame.vertices[i];
    if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z)) {
      throw ValidationError("vertex " + std::to_string(i) + " has a non-finite coordinate");
    }
  }
  for (std::size_t f = 0; f < frame.faces.size(); ++f) {
    const Face& face = frame.faces[f];
    for (int idx : face) {
      if (idx < 0 || idx >= nv) {
        throw ValidationError("face " + std::to_string(f) + " references vertex " + std::to_string(idx) +
                              " outside [0, " + std::to_string(nv) + ")");
      }
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
      throw ValidationError("face " + std::to_string(f) + " repeats a vertex");
    }
  }
}

inline std::uint64_t topology_digest(const std::vector<Face>& faces) {
  Digest d;
  for (const Face& f : faces) {
    for (int idx : f) d.update(&idx, sizeof idx);
  }
  return d.value();
}

// Parses Wavefront OBJ text. Supported records: `v x y z` and `f ...` with
// 3 or 4 vertices; `/texture/normal` suffixes are ignored, quads are
// fan-triangulated, polygons with more than 4 sides are rejected. Face
// indices are 1-based in the file and validated once the vertex list is
// complete.
inline MeshFrame parse_obj(std::istream& in) {
  MeshFrame frame;
  std::vector<std::pair<Face, int>> pending_faces;  // face, line number
  std::string line;
  int line_no = 0;

  auto parse_coord = [&](const std::string& tok) {
    return parse_double_field(tok, "obj", line_no);
  };
  auto parse_face_index = [&](const std::string& tok) {
    std::string head = tok.substr(0, tok.find('/'));
    try {
      std::size_t used = 0;
      int idx = std::stoi(head, &used);
      if (used != head.size()) throw std::invalid_argument(head);
      return idx;
    } catch (const std::exception&) {
      throw ParseError("obj: line " + std::to_string(line_no) + ": bad face index '" + tok + "'");
    }
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::string tag;
    if (!(fields >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      std::string xs, ys, zs;
      if (!(fields >> xs >> ys >> zs)) {
        throw ParseError("obj: line " + std::to_string(line_no) + ": vertex needs 3 coordinates");
      }
      frame.vertices.push_back({parse_coord(xs), parse_coord(ys), parse_coord(zs)});
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (fields >> tok) idx.push_back(parse_face_index(tok));
      for (int& i : idx) {
        if (i < 1) throw ParseError("obj: line " + std::to_string(line_no) + ": non-positive face index");
        --i;  // to 0-based
      }
      if (idx.size() == 3) {
        pending_faces.push_back({{idx[0], idx[1], idx[2]}, line_no});
      } else if (idx.size() == 4) {
        pending_faces.push_back({{idx[0], idx[1], idx[2]}, line_no});
        pending_faces.push_back({{idx[0], idx[2], idx[3]}, line_no});
      } else {
        throw ValidationError("obj: line " + std::to_string(line_no) + ": face with " +
                              std::to_string(idx.size()) + " vertices (only 3 or 4 supported)");
      }
    }
    // vt/vn/o/g/s/usemtl/mtllib records are ignored
  }

  const int nv = frame.vertex_count();
  for (const auto& [face, fline] : pending_faces) {
    for (int i : face) {
      if (i >= nv) {
        throw ValidationError("obj: line " + std::to_string(fline) + ": face index " + std::to_string(i + 1) +
                              " exceeds vertex count " + std::to_string(nv));
      }
    }
    frame.faces.push_back(face);
  }
  validate_frame(frame);
  return frame;
}

inline MeshFrame load_obj_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open obj: " + path);
  try {
    return parse_obj(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

inline void write_obj_file(const std::string& path, const MeshFrame& frame) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write obj: " + path);
  for (const Vec3& v : frame.vertices) {
    out << "v " << format_double(v.x) << ' ' << format_double(v.y) << ' ' << format_double(v.z) << '\n';
  }
  for (const Face& f : frame.faces) {
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  }
}

struct MeshSequence {
  std::vector<MeshFrame> frames;
  double fps = 0.0;
  std::uint64_t topology_id = 0;
};

inline MeshSequence make_sequence(std::vector<MeshFrame> frames, double fps) {
  if (frames.empty()) throw ValidationError("mesh sequence has no frames");
  if (!(fps > 0.0)) throw ValidationError("mesh sequence fps must be positive");
  for (const MeshFrame& f : frames) validate_frame(f);
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (frames[i].faces != frames[0].faces) {
      throw ValidationError("frame " + std::to_string(i) + " has a different face list (topology must be fixed)");
    }
  }
  MeshSequence seq;
  seq.topology_id = topology_digest(frames[0].faces);
  seq.frames = std::move(frames);
  seq.fps = fps;
  return seq;
}

// Loads frame_000000.obj, frame_000001.obj, ... until the first gap.
inline MeshSequence load_sequence(const std::string& dir, double fps) {
  std::vector<MeshFrame> frames;
  for (int i = 0;; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%06d.obj", i);
    std::filesystem::path p = std::filesystem::path(dir) / name;
    if (!std::filesystem::exists(p)) break;
    frames.push_back(load_obj_file(p.string()));
  }
  if (frames.empty()) throw IoError("no frame_%06d.obj files under " + dir);
  return make_sequence(std::move(frames), fps);
}

struct MeshEdge {
  int u = 0, v = 0;      // canonical u < v
  double weight = 0.0;   // Euclidean distance, meters
};

// Undirected edge graph of a mesh frame. Edges are the deduplicated sides
// of all faces; adjacency lists are sorted by neighbor index so traversal
// order is deterministic.
class MeshGraph {
 public:
  static MeshGraph from_edges(int vertex_count, std::vector<MeshEdge> edges, std::uint64_t topology_id = 0) {
    MeshGraph g;
    g.vertex_count_ = vertex_count;
    g.topology_id_ = topology_id;
    for (auto& e : edges) {
      if (e.u == e.v) throw ValidationError("self-loop edge at vertex " + std::to_string(e.u));
      if (e.u > e.v) std::swap(e.u, e.v);
      if (e.u < 0 || e.v >= vertex_count) throw ValidationError("edge endpoint out of range");
      if (!(e.weight > 0.0)) {
        throw ValidationError("degenerate edge between vertices " + std::to_string(e.u) + " and " +
                              std::to_string(e.v));
      }
    }
    std::sort(edges.begin(), edges.end(),
              [](const MeshEdge& a, const MeshEdge& b) { return a.u != b.u ? a.u < b.u : a.v < b.v; });
    edges.erase(std::unique(edges.begin(), edges.end(),
                            [](const MeshEdge& a, const MeshEdge& b) { return a.u == b.u && a.v == b.v; }),
                edges.end());
    g.edges_ = std::move(edges);
    g.build_adjacency();
    return g;
  }

  int vertex_count() const { return vertex_count_; }
  const std::vector<MeshEdge>& edges() const { return edges_; }
  std::uint64_t topology_id() const { return topology_id_; }

  // (neighbor, weight) pairs of v, ascending by neighbor index.
  struct Neighbor {
    int vertex;
    double weight;
  };
  const std::vector<Neighbor>& neighbors(int v) const { return adjacency_[v]; }

 private:
  void build_adjacency() {
    adjacency_.assign(vertex_count_, {});
    for (const MeshEdge& e : edges_) {
      adjacency_[e.u].push_back({e.v, e.weight});
      adjacency_[e.v].push_back({e.u, e.weight});
    }
    for (auto& nbrs : adjacency_) {
      std::sort(nbrs.begin(), nbrs.end(), [](const Neighbor& a, const Neighbor& b) { return a.vertex < b.vertex; });
    }
  }

  int vertex_count_ = 0;
  std::uint64_t topology_id_ = 0;
  std::vector<MeshEdge> edges_;
  std::vector<std::vector<Neighbor>> adjacency_;
};

inline MeshGraph build_graph(const MeshFrame& frame) {
  validate_frame(frame);
  std::vector<MeshEdge> edges;
  edges.reserve(frame.faces.size() * 3);
  for (const Face& f : frame.faces) {
    const int sides[3][2] = {{f[0], f[1]}, {f[1], f[2]}, {f[0], f[2]}};
    for (const auto& s : sides) {
      double w = distance(frame.vertices[s[0]], frame.vertices[s[1]]);
      if (w == 0.0) {
        throw ValidationError("degenerate edge between vertices " + std::to_string(std::min(s[0], s[1])) + " and " +
                              std::to_string(std::max(s[0], s[1])) + " (coincident positions)");
      }
      edges.push_back({s[0], s[1], w});
    }
  }
  return MeshGraph::from_edges(frame.vertex_count(), std::move(edges), topology_digest(frame.faces));
}

// Recomputes edge weights for a new frame of the same topology. The edge
// set is untouched, so per-frame queries amortize the dedup work.
inline MeshGraph reweight(const MeshGraph& graph, const MeshFrame& frame) {
  if (topology_digest(frame.faces) != graph.topology_id()) {
    throw ValidationError("reweight: frame topology does not match the graph's source frame");
  }
  std::vector<MeshEdge> edges = graph.edges();
  for (MeshEdge& e : edges) {
    e.weight = distance(frame.vertices[e.u], frame.vertices[e.v]);
    if (e.weight == 0.0) {
      throw ValidationError("degenerate edge between vertices " + std::to_string(e.u) + " and " +
                            std::to_string(e.v) + " (coincident positions)");
    }
  }
  return MeshGraph::from_edges(graph.vertex_count(), std::move(edges), graph.topology_id());
}

}  // namespace impsim
