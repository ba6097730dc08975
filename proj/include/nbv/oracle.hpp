#pragma once

#include <cstdint>
#include <vector>

#include "nbv/occupancy.hpp"
#include "nbv/scene.hpp"
#include "nbv/sensor.hpp"

namespace nbv {

// Ground-truth-aware scoring context. Holds the surface voxel list plus a
// membership mask for O(1) lookups during ray walks.
struct OracleContext {
  const GroundTruthScene* scene = nullptr;
  CameraModel camera;
  SurfaceSet surface;
  std::vector<std::uint8_t> surface_mask;

  OracleContext() = default;
  OracleContext(const GroundTruthScene& s, const CameraModel& cam);
};

// Sum over surface voxels of (1 - unc), the certainty-weighted count of
// observed surface voxels.
double obs_surf(const OccupancyMap& map, const OracleContext& ctx);

// Utility of taking a measurement at `pose`: the exact ObsSurf gain,
// (1 - exp(-eta)) * sum of unc over the surface voxels the measurement's rays
// observe. Evaluated from a ground-truth depth render without mutating the
// map.
double oracle_score(const OccupancyMap& map, const Pose& pose, const OracleContext& ctx);

// Same score given an already-rendered ground-truth depth image.
double oracle_score_from_depth(const OccupancyMap& map, const Pose& pose, const DepthImage& depth,
                               const OracleContext& ctx);

}  // namespace nbv
