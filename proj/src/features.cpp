#include "nbv/features.hpp"

#include <cmath>
#include <stdexcept>

namespace nbv {

MultiScaleSample extract(const OccupancyMap& map, const Pose& pose, const FeatureConfig& cfg) {
  if (cfg.levels < 1) throw std::invalid_argument("levels must be >= 1");
  if (cfg.dims.x < 2 || cfg.dims.y < 2 || cfg.dims.z < 2)
    throw std::invalid_argument("sample dims must be >= 2 per axis");
  if (cfg.levels > map.pyramid_levels())
    throw std::invalid_argument("map pyramid does not cover the requested levels");

  MultiScaleSample s;
  s.dims = cfg.dims;
  s.levels = cfg.levels;
  s.pose = pose;
  s.values.resize(s.value_count());

  const Vec3 fwd = pose.forward();
  const Vec3 right = pose.right();
  const Vec3 up = pose.up();
  const int C = s.channels();

  std::size_t out = 0;
  for (int iz = 0; iz < cfg.dims.z; ++iz)
    for (int iy = 0; iy < cfg.dims.y; ++iy)
      for (int ix = 0; ix < cfg.dims.x; ++ix) {
        const double ax = ix - (cfg.dims.x - 1) / 2.0;
        const double ay = iy - (cfg.dims.y - 1) / 2.0;
        const double az = iz - (cfg.dims.z - 1) / 2.0;
        for (int l = 1; l <= cfg.levels; ++l) {
          const double spacing = map.grid().resolution * (1 << l);
          const Vec3 p = pose.position + fwd * (ax * spacing) + right * (ay * spacing) +
                         up * (az * spacing);
          const auto [o, u] = map.multiscale_average(p, l);
          s.values[out + 2 * (l - 1)] = static_cast<float>(o);
          s.values[out + 2 * (l - 1) + 1] = static_cast<float>(u);
        }
        out += C;
      }
  return s;
}

std::vector<MultiScaleSample> extract_batch(const OccupancyMap& map,
                                            const std::vector<Pose>& poses,
                                            const FeatureConfig& cfg) {
  std::vector<MultiScaleSample> out(poses.size());
  const int n = static_cast<int>(poses.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) out[i] = extract(map, poses[i], cfg);
  return out;
}

double yaw_rotate_equivalence_check(const OccupancyMap& original, const OccupancyMap& rotated,
                                    const Pose& pose, int k_quarter_turns,
                                    const FeatureConfig& cfg) {
  Pose turned = pose;
  turned.yaw = wrap_angle(pose.yaw + k_quarter_turns * (M_PI / 2.0));
  const MultiScaleSample a = extract(original, turned, cfg);
  const MultiScaleSample b = extract(rotated, pose, cfg);
  double max_diff = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i)
    max_diff = std::max(max_diff, std::abs(static_cast<double>(a.values[i]) - b.values[i]));
  return max_diff;
}

}  // namespace nbv
