#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "nbv/geometry.hpp"
#include "nbv/scene.hpp"

namespace nbv {

struct CameraModel {
  int width = 64;
  int height = 48;
  double horizontal_fov_deg = 90.0;
  double max_range = 20.0;

  // Focal length in pixels; square pixels, so it serves both axes.
  double focal() const;
  // Unit direction of the pixel (i, j) center for a camera at `pose`.
  Vec3 pixel_ray(const Pose& pose, int i, int j) const;
  int pixel_count() const { return width * height; }
};

constexpr float kNoReturn = std::numeric_limits<float>::infinity();

struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<float> depth;  // row-major, kNoReturn where nothing was hit

  float at(int i, int j) const { return depth[static_cast<std::size_t>(j) * width + i]; }
};

struct NoiseModel {
  double drop_fraction = 0.0;
  double sigma = 0.0;  // meters
  std::uint64_t seed = 0;
};

// Casts one ray per pixel against the ground truth and reports the distance
// to the entry face of the first occupied voxel, or kNoReturn within range.
DepthImage render_depth(const GroundTruthScene& scene, const Pose& pose,
                        const CameraModel& camera);

// Drops exactly round(drop_fraction * N) pixels, then perturbs each surviving
// finite depth with Gaussian noise clamped to (0, max_range].
DepthImage apply_noise(const DepthImage& image, const NoiseModel& noise, double max_range);

// 16-bit PGM with millimeter quantization, for eyeballing renders.
void write_depth_pgm(const DepthImage& image, double max_range, const std::string& path);

}  // namespace nbv
