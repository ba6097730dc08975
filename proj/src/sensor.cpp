#include "nbv/sensor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "nbv/errors.hpp"
#include "nbv/raycast.hpp"
#include "nbv/rng.hpp"

namespace nbv {

double CameraModel::focal() const {
  return (width / 2.0) / std::tan(horizontal_fov_deg * M_PI / 180.0 / 2.0);
}

Vec3 CameraModel::pixel_ray(const Pose& pose, int i, int j) const {
  const double f = focal();
  const double x_ndc = (i + 0.5 - width / 2.0) / f;
  const double y_ndc = (j + 0.5 - height / 2.0) / f;
  // Rows grow downward in the image, hence the negative up component.
  const Vec3 d = pose.forward() + pose.right() * x_ndc + pose.up() * (-y_ndc);
  return d.normalized();
}

DepthImage render_depth(const GroundTruthScene& scene, const Pose& pose,
                        const CameraModel& camera) {
  if (camera.width < 1 || camera.height < 1 || camera.max_range <= 0.0 ||
      camera.horizontal_fov_deg <= 0.0 || camera.horizontal_fov_deg >= 180.0)
    throw std::invalid_argument("invalid camera model");
  if (scene.grid.contains_point(pose.position) &&
      scene.occupied_at(scene.grid.voxel_of(pose.position)))
    throw DomainError("camera pose inside an occupied voxel");

  DepthImage img;
  img.width = camera.width;
  img.height = camera.height;
  img.depth.assign(static_cast<std::size_t>(camera.pixel_count()), kNoReturn);

  const int n = camera.pixel_count();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < n; ++p) {
    const int i = p % camera.width;
    const int j = p / camera.width;
    const Vec3 dir = camera.pixel_ray(pose, i, j);
    float d = kNoReturn;
    walk_voxels(scene.grid, pose.position, dir, camera.max_range,
                [&](const Vec3i& v, double t_entry, double) {
                  if (scene.occupied_at(v)) {
                    d = static_cast<float>(t_entry);
                    return false;
                  }
                  return true;
                });
    img.depth[p] = d;
  }
  return img;
}

DepthImage apply_noise(const DepthImage& image, const NoiseModel& noise, double max_range) {
  if (noise.drop_fraction < 0.0 || noise.drop_fraction > 1.0)
    throw std::invalid_argument("drop_fraction must be in [0,1]");
  if (noise.sigma < 0.0) throw std::invalid_argument("sigma must be >= 0");
  if (noise.drop_fraction == 0.0 && noise.sigma == 0.0) return image;

  DepthImage out = image;
  const int n = image.width * image.height;
  Rng rng = substream(noise.seed, "noise");

  const int n_drop = static_cast<int>(std::llround(noise.drop_fraction * n));
  if (n_drop > 0) {
    // Partial Fisher-Yates: the first n_drop entries are a uniform sample
    // without replacement.
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int i = 0; i < n_drop; ++i) {
      const int j = i + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n - i)));
      std::swap(idx[i], idx[j]);
      out.depth[idx[i]] = kNoReturn;
    }
  }
  if (noise.sigma > 0.0) {
    for (int p = 0; p < n; ++p) {
      float& d = out.depth[p];
      if (!std::isfinite(d)) continue;
      const double noisy = d + rng.normal(0.0, noise.sigma);
      d = static_cast<float>(std::clamp(noisy, 1e-3, max_range));
    }
  }
  return out;
}

void write_depth_pgm(const DepthImage& image, double max_range, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "P5\n" << image.width << " " << image.height << "\n65535\n";
  for (int p = 0; p < image.width * image.height; ++p) {
    const float d = image.depth[p];
    const double mm = std::isfinite(d) ? std::clamp(static_cast<double>(d), 0.0, max_range) * 1000.0
                                       : max_range * 1000.0;
    const auto q = static_cast<std::uint16_t>(std::min(65535.0, mm));
    const unsigned char bytes[2] = {static_cast<unsigned char>(q >> 8),
                                    static_cast<unsigned char>(q & 0xff)};
    out.write(reinterpret_cast<const char*>(bytes), 2);
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace nbv
