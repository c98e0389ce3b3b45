// Strain relaxation of geodesic vertex chains.
//
// The graph shortest path hugs mesh vertices, so its length carries
// discretization artifacts. relax_path() smooths the chain with damped
// Laplacian steps (endpoints pinned), optionally constrained to stay near
// the originating mesh vertices, which treats the mesh as a rigid scaffold.
//
// Termination: a step is committed only if the total length does not
// increase. The loop stops at max_iters, or when both the per-step length
// change falls below convergence_tol AND the extrapolated remaining
// displacement does. The second condition estimates the distance to the
// fixed point from the geometric decay of per-step movement; the length
// change alone shrinks quadratically near the limit and would stop while
// points are still far from converged.
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "impsim/error.hpp"
#include "impsim/geodesic.hpp"
#include "impsim/geometry.hpp"
#include "impsim/mesh.hpp"

namespace impsim {

struct RelaxConfig {
  double step_size = 0.5;                  // in (0, 1]
  int max_iters = 200;
  double convergence_tol = 1e-6;           // meters
  std::optional<double> surface_radius;    // meters; disabled by default
};

inline void validate_relax_config(const RelaxConfig& cfg) {
  if (!(cfg.step_size > 0.0) || cfg.step_size > 1.0) throw ValidationError("relax step_size must be in (0, 1]");
  if (cfg.max_iters < 1) throw ValidationError("relax max_iters must be >= 1");
  if (!(cfg.convergence_tol > 0.0)) throw ValidationError("relax convergence_tol must be positive");
  if (cfg.surface_radius && !(*cfg.surface_radius > 0.0)) {
    throw ValidationError("relax surface_radius must be positive when enabled");
  }
}

struct RelaxedPath {
  std::vector<Vec3> points;
  double length = 0.0;
  int iterations_used = 0;
};

inline double polyline_length(const std::vector<Vec3>& pts) {
  double len = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) len += distance(pts[i - 1], pts[i]);
  return len;
}

inline RelaxedPath relax_path(const GeodesicPath& path, const MeshFrame& frame, const RelaxConfig& cfg) {
  validate_relax_config(cfg);
  if (path.vertices.size() < 2) throw ValidationError("relax_path needs a path with at least 2 points");

  std::vector<Vec3> pts;
  pts.reserve(path.vertices.size());
  for (int v : path.vertices) {
    if (v < 0 || v >= frame.vertex_count()) throw ValidationError("path vertex out of range for frame");
    pts.push_back(frame.vertices[v]);
  }
  const std::vector<Vec3> anchors = pts;  // scaffold centers for the surface constraint

  RelaxedPath out;
  if (pts.size() == 2) {
    out.points = pts;
    out.length = polyline_length(pts);
    out.iterations_used = 0;
    return out;
  }

  const std::size_t n = pts.size();
  double cur_len = polyline_length(pts);
  std::vector<Vec3> next(n);
  double prev_move = -1.0;
  double move_hist[3] = {0, 0, 0};  // last ratios of successive max movements
  int ratio_count = 0;
  int committed = 0;

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    next = pts;
    double max_move = 0.0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
      Vec3 mid = (pts[i - 1] + pts[i + 1]) * 0.5;
      Vec3 cand = pts[i] + (mid - pts[i]) * cfg.step_size;
      if (cfg.surface_radius) {
        Vec3 off = cand - anchors[i];
        double d = off.norm();
        if (d > *cfg.surface_radius) cand = anchors[i] + off * (*cfg.surface_radius / d);
      }
      next[i] = cand;
      max_move = std::max(max_move, distance(cand, pts[i]));
    }

    double new_len = polyline_length(next);
    if (new_len > cur_len) break;  // uncommitted; smoothing has stopped helping
    pts.swap(next);
    ++committed;
    double dlen = cur_len - new_len;
    cur_len = new_len;

    if (prev_move > 0.0 && max_move > 0.0) {
      move_hist[ratio_count % 3] = max_move / prev_move;
      ++ratio_count;
      if (ratio_count >= 3 && dlen < cfg.convergence_tol) {
        double rho = std::min(std::max({move_hist[0], move_hist[1], move_hist[2]}), 1.0 - 1e-9);
        if (max_move * rho / (1.0 - rho) < cfg.convergence_tol) break;
      }
    } else if (max_move == 0.0) {
      break;  // already a fixed point (collinear path)
    }
    prev_move = max_move;
  }

  out.points = std::move(pts);
  out.length = cur_len;
  out.iterations_used = committed;
  return out;
}

struct RelaxedSeries {
  std::vector<double> raw_lengths;      // geodesic lengths per frame
  std::vector<double> relaxed_lengths;  // after strain relaxation
};

inline RelaxedSeries relaxed_series(const MeshSequence& sequence, ElectrodePair electrodes, const RelaxConfig& cfg) {
  validate_relax_config(cfg);
  PathSeries series = path_series(sequence, electrodes);
  RelaxedSeries out;
  out.raw_lengths = series.lengths;
  out.relaxed_lengths.reserve(series.lengths.size());
  for (std::size_t t = 0; t < series.chains.size(); ++t) {
    GeodesicPath p{series.chains[t], series.lengths[t]};
    RelaxedPath r = relax_path(p, sequence.frames[t], cfg);
    out.relaxed_lengths.push_back(r.length);
  }
  return out;
}

}  // namespace impsim
