#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "nbv/geometry.hpp"

namespace nbv {

// Amanatides-Woo 3D-DDA state for a ray clipped against the grid box.
struct RaySetup {
  bool valid = false;
  Vec3i voxel;
  Vec3i step;
  double t_max[3] = {0, 0, 0};
  double t_delta[3] = {0, 0, 0};
  double t_start = 0.0;  // distance at which traversal begins (>= 0)
  double t_exit = 0.0;   // distance at which it ends (grid exit or t_limit)
};

inline RaySetup setup_ray(const GridGeometry& g, const Vec3& origin, const Vec3& dir,
                          double t_limit) {
  RaySetup r;
  double t0 = 0.0;
  double t1 = t_limit;
  const Vec3 gmin = g.origin;
  const Vec3 gmax = g.max_corner();
  for (int i = 0; i < 3; ++i) {
    const double o = origin[i];
    const double d = dir[i];
    if (d == 0.0) {
      if (o < gmin[i] || o >= gmax[i]) return r;
    } else {
      double ta = (gmin[i] - o) / d;
      double tb = (gmax[i] - o) / d;
      if (ta > tb) std::swap(ta, tb);
      if (ta > t0) t0 = ta;
      if (tb < t1) t1 = tb;
      if (t0 > t1) return r;
    }
  }

  const Vec3 p = origin + dir * t0;
  Vec3i v = g.voxel_of(p);
  v.x = std::clamp(v.x, 0, g.dims.x - 1);
  v.y = std::clamp(v.y, 0, g.dims.y - 1);
  v.z = std::clamp(v.z, 0, g.dims.z - 1);

  for (int i = 0; i < 3; ++i) {
    const double o = origin[i];
    const double d = dir[i];
    if (d > 0.0) {
      r.step[i] = 1;
      const double boundary = gmin[i] + (v[i] + 1) * g.resolution;
      r.t_max[i] = std::max((boundary - o) / d, t0);
      r.t_delta[i] = g.resolution / d;
    } else if (d < 0.0) {
      r.step[i] = -1;
      const double boundary = gmin[i] + v[i] * g.resolution;
      r.t_max[i] = std::max((boundary - o) / d, t0);
      r.t_delta[i] = -g.resolution / d;
    } else {
      r.step[i] = 0;
      r.t_max[i] = std::numeric_limits<double>::infinity();
      r.t_delta[i] = std::numeric_limits<double>::infinity();
    }
  }

  r.voxel = v;
  r.t_start = t0;
  r.t_exit = t1;
  r.valid = true;
  return r;
}

// Visits the voxels pierced by the ray segment [0, t_limit] in order.
// The visitor receives (voxel, t_entry, t_exit_of_voxel) and returns false to
// stop. Consecutive voxels are always face neighbors.
template <typename Visitor>
inline void walk_voxels(const GridGeometry& g, const Vec3& origin, const Vec3& dir, double t_limit,
                        Visitor&& visit) {
  RaySetup r = setup_ray(g, origin, dir, t_limit);
  if (!r.valid) return;
  Vec3i v = r.voxel;
  double t_cur = r.t_start;
  for (;;) {
    int axis = 0;
    if (r.t_max[1] < r.t_max[axis]) axis = 1;
    if (r.t_max[2] < r.t_max[axis]) axis = 2;
    const double t_next = r.t_max[axis];
    const bool last = t_next >= r.t_exit;
    if (!visit(static_cast<const Vec3i&>(v), t_cur, last ? r.t_exit : t_next)) return;
    if (last) return;
    v[axis] += r.step[axis];
    if (v[axis] < 0 || v[axis] >= g.dims[axis]) return;
    t_cur = t_next;
    r.t_max[axis] += r.t_delta[axis];
  }
}

// Slack added past a reported depth so that the voxel whose entry face
// produced the hit is reached despite float rounding of the stored depth.
inline double depth_overshoot(double depth) { return 1e-5 * depth + 1e-6; }

// Walks the voxels a depth measurement observes. For a finite depth the last
// visited voxel is the measurement endpoint (the surface hit) unless the ray
// leaves the grid first; all voxels before it were traversed as free space.
// `visit(voxel, is_endpoint)` returns false to stop early.
//
// Both the map update and the oracle's closed-form score use this exact
// enumeration, which keeps the two paths consistent voxel for voxel.
template <typename Visitor>
inline void trace_measurement_ray(const GridGeometry& g, const Vec3& origin, const Vec3& dir,
                                  double depth, double max_range, Visitor&& visit) {
  const bool returned = std::isfinite(depth) && depth < max_range;
  const double t_limit = returned ? depth + depth_overshoot(depth) : max_range;

  RaySetup r = setup_ray(g, origin, dir, t_limit);
  if (!r.valid) return;
  Vec3i v = r.voxel;
  for (;;) {
    int axis = 0;
    if (r.t_max[1] < r.t_max[axis]) axis = 1;
    if (r.t_max[2] < r.t_max[axis]) axis = 2;
    const double t_next = r.t_max[axis];
    if (t_next >= r.t_exit) {
      // Ends inside this voxel: endpoint when the clip came from the depth
      // rather than from leaving the grid.
      const bool clipped_by_depth = returned && t_limit <= r.t_exit;
      visit(static_cast<const Vec3i&>(v), clipped_by_depth);
      return;
    }
    if (!visit(static_cast<const Vec3i&>(v), false)) return;
    v[axis] += r.step[axis];
    if (v[axis] < 0 || v[axis] >= g.dims[axis]) return;
    r.t_max[axis] += r.t_delta[axis];
  }
}

}  // namespace nbv
