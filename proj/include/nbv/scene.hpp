#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nbv/geometry.hpp"

namespace nbv {

struct GroundTruthScene {
  GridGeometry grid;
  std::vector<std::uint8_t> occupied;  // one byte per voxel, x-fastest

  bool occupied_at(const Vec3i& v) const { return occupied[grid.linear_index(v)] != 0; }
  bool occupied_at(std::int64_t idx) const { return occupied[idx] != 0; }

  std::int64_t occupied_count() const;
  bool operator==(const GroundTruthScene& o) const {
    return grid == o.grid && occupied == o.occupied;
  }
};

// Occupied voxels with at least one free 6-neighbor, sorted by linear index.
struct SurfaceSet {
  std::vector<std::int64_t> voxels;
};

// Axis-aligned voxel box [min, max] inclusive.
struct VoxelBox {
  Vec3i min;
  Vec3i max;
};

// Procedural city layout before rasterization: a ground slab plus buildings.
// Kept separate from the filled grid so tests can rasterize independently.
struct CityScenePlan {
  GridGeometry grid;
  VoxelBox slab;
  std::vector<VoxelBox> buildings;
};

struct CitySceneParams {
  Vec3 extent{40.0, 40.0, 20.0};  // meters
  double resolution = 0.4;
  int building_count = 6;
  double height_min = 2.0;  // meters
  double height_max = 8.0;
  double footprint_min = 2.0;  // meters, building side lengths
  double footprint_max = 8.0;
};

CityScenePlan plan_city_scene(std::uint64_t seed, const CitySceneParams& params);
GroundTruthScene rasterize(const CityScenePlan& plan);
GroundTruthScene generate_city_scene(std::uint64_t seed, const CitySceneParams& params);

SurfaceSet surface_set(const GroundTruthScene& scene);

void save_scene(const GroundTruthScene& scene, const std::string& path);
GroundTruthScene load_scene(const std::string& path);

}  // namespace nbv
