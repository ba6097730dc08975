#include "nbv/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "nbv/raycast.hpp"

namespace nbv {

OracleContext::OracleContext(const GroundTruthScene& s, const CameraModel& cam)
    : scene(&s), camera(cam), surface(surface_set(s)) {
  surface_mask.assign(static_cast<std::size_t>(s.grid.voxel_count()), 0);
  for (const auto idx : surface.voxels) surface_mask[idx] = 1;
}

double obs_surf(const OccupancyMap& map, const OracleContext& ctx) {
  if (!(map.grid() == ctx.scene->grid))
    throw std::invalid_argument("map grid does not match scene grid");
  // Kahan summation keeps the rounding error negligible against the 1e-9
  // relative tolerance of the score identity.
  double sum = 0.0, comp = 0.0;
  for (const auto idx : ctx.surface.voxels) {
    const double term = 1.0 - map.unc_exact(idx);
    const double y = term - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  return sum;
}

double oracle_score_from_depth(const OccupancyMap& map, const Pose& pose, const DepthImage& depth,
                               const OracleContext& ctx) {
  if (!(map.grid() == ctx.scene->grid))
    throw std::invalid_argument("map grid does not match scene grid");
  const auto& g = map.grid();
  const auto& cam = ctx.camera;

  // The same per-ray enumeration the map update performs, filtered to surface
  // voxels; the score is then the exact ObsSurf gain of integrating this
  // measurement.
  std::vector<std::int64_t> touched;
  const int n = cam.pixel_count();
  for (int p = 0; p < n; ++p) {
    const float d = depth.depth[p];
    const Vec3 dir = cam.pixel_ray(pose, p % cam.width, p / cam.width);
    trace_measurement_ray(g, pose.position, dir, d, cam.max_range,
                          [&](const Vec3i& v, bool) {
                            const std::int64_t idx = g.linear_index(v);
                            if (ctx.surface_mask[idx]) touched.push_back(idx);
                            return true;
                          });
  }
  std::sort(touched.begin(), touched.end());
  touched.erase(std::unique(touched.begin(), touched.end()), touched.end());

  double sum = 0.0, comp = 0.0;
  for (const auto idx : touched) {
    const double y = map.unc_exact(idx) - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  return (1.0 - std::exp(-map.eta())) * sum;
}

double oracle_score(const OccupancyMap& map, const Pose& pose, const OracleContext& ctx) {
  const DepthImage depth = render_depth(*ctx.scene, pose, ctx.camera);
  return oracle_score_from_depth(map, pose, depth, ctx);
}

}  // namespace nbv
