#pragma once

#include <vector>

#include "nbv/geometry.hpp"
#include "nbv/occupancy.hpp"

namespace nbv {

struct FeatureConfig {
  Vec3i dims{16, 16, 8};  // sample lattice size (Dx, Dy, Dz)
  int levels = 3;         // L; the tensor has 2L channels
};

// x(M, p): multi-scale occupancy/uncertainty tensor around a pose.
// Memory order [z][y][x][channel], channels [occ_l1, unc_l1, occ_l2, ...].
struct MultiScaleSample {
  Vec3i dims;
  int levels = 0;
  Pose pose;
  std::vector<float> values;

  int channels() const { return 2 * levels; }
  std::size_t value_count() const {
    return static_cast<std::size_t>(dims.x) * dims.y * dims.z * channels();
  }
  float at(int ix, int iy, int iz, int c) const {
    return values[((static_cast<std::size_t>(iz) * dims.y + iy) * dims.x + ix) * channels() + c];
  }
};

// Samples the level-l pyramid on a Dx x Dy x Dz lattice with spacing
// 2^l * resolution, centered on the camera position and yaw-aligned to the
// camera frame. The map's pyramid must cover `levels`.
MultiScaleSample extract(const OccupancyMap& map, const Pose& pose, const FeatureConfig& cfg);

// Extraction for many poses over one map snapshot; parallel over poses.
std::vector<MultiScaleSample> extract_batch(const OccupancyMap& map,
                                            const std::vector<Pose>& poses,
                                            const FeatureConfig& cfg);

// Max-abs difference between extracting at `pose` yawed by k quarter turns on
// `original` and extracting at `pose` on `rotated`, where `rotated` holds the
// original's contents rotated by the same k quarter turns about the pose
// position (the caller constructs it). Exact lattice alignment makes this
// near zero for any k.
double yaw_rotate_equivalence_check(const OccupancyMap& original, const OccupancyMap& rotated,
                                    const Pose& pose, int k_quarter_turns,
                                    const FeatureConfig& cfg);

}  // namespace nbv
