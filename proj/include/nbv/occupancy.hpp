#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nbv/geometry.hpp"
#include "nbv/sensor.hpp"

namespace nbv {

enum class VoxelClass { Free, Occupied, Unknown };

struct ClassifyThresholds {
  double occ_free_max = 0.25;
  double occ_occupied_min = 0.75;
  double unc_known_max = 0.5;
};

struct InverseSensorModel {
  float l_occ = 0.85f;
  float l_free = -0.4f;
  float l_clamp = 3.5f;  // log-odds clamped to [-l_clamp, +l_clamp]
};

struct UpdateStats {
  std::int64_t voxels_touched = 0;
  std::int64_t hits = 0;
  std::int64_t frees = 0;
};

// Threshold precedence: uncertainty first, then occupied, then free.
inline VoxelClass classify_values(float occ, float unc, const ClassifyThresholds& t) {
  if (unc > t.unc_known_max) return VoxelClass::Unknown;
  if (occ >= t.occ_occupied_min) return VoxelClass::Occupied;
  if (occ <= t.occ_free_max) return VoxelClass::Free;
  return VoxelClass::Unknown;
}

// One mipmap level: each cell averages a cube of 2^level base voxels per
// axis, padding out-of-grid voxels with (occ_prior, 1).
struct PyramidLevel {
  Vec3i dims;
  std::vector<float> occ;
  std::vector<float> unc;
};

// The agent's belief M = (M^o, M^u). Occupancy lives in clamped log-odds;
// uncertainty is exp(-eta * n) where n counts the measurements that observed
// the voxel, so repeated decay stays exact. Cleared voxels use -inf log-odds
// and a count sentinel, giving exact (0, 0).
class OccupancyMap {
 public:
  static constexpr std::uint32_t kClearedCount = 1u << 30;

  OccupancyMap() = default;
  OccupancyMap(const GridGeometry& grid, double eta, double occ_prior, int pyramid_levels,
               const InverseSensorModel& ism = {});

  const GridGeometry& grid() const { return grid_; }
  double eta() const { return eta_; }
  double occ_prior() const { return occ_prior_; }
  std::uint64_t version() const { return version_; }
  int pyramid_levels() const { return static_cast<int>(pyramid_.size()); }
  const InverseSensorModel& sensor_model() const { return ism_; }

  float occ(std::int64_t idx) const { return occ_[idx]; }
  float unc(std::int64_t idx) const { return unc_[idx]; }
  std::uint32_t observation_count(std::int64_t idx) const { return count_[idx]; }

  // exp(-eta * n) in double, the exact Eq.-style decay chain.
  double unc_exact(std::int64_t idx) const;

  VoxelClass classify(const Vec3i& v, const ClassifyThresholds& t) const;
  // Out-of-grid positions classify as Unknown.
  VoxelClass classify_point(const Vec3& p, const ClassifyThresholds& t) const;

  // Marks every voxel whose center lies in the half-open box
  // [center - extent/2, center + extent/2) as exactly known free.
  void clear_box(const Vec3& center, double extent);

  UpdateStats integrate_measurement(const Pose& pose, const DepthImage& depth,
                                    const CameraModel& camera);

  // Mean (occ, unc) over the cube of 2^level voxels nearest the query point:
  // trilinear interpolation between pyramid cell centers. Out-of-grid reads
  // (occ_prior, 1).
  std::pair<double, double> multiscale_average(const Vec3& p, int level) const;

  // Rebuilds stale pyramid regions. Integration already calls this; it is a
  // no-op on a clean map and must not race with concurrent readers.
  void refresh_pyramid();

  const PyramidLevel& pyramid_level(int level) const { return pyramid_[level - 1]; }

  // Used by load_map to repopulate state from serialized fields.
  void restore_fields(const std::vector<float>& occ, const std::vector<float>& unc);

 private:
  void mark_dirty(const Vec3i& v);
  void apply_update(std::int64_t idx, bool hit);

  GridGeometry grid_;
  double eta_ = 0.0;
  double occ_prior_ = 0.5;
  InverseSensorModel ism_;
  std::vector<float> logodds_;
  std::vector<std::uint32_t> count_;
  std::vector<float> occ_;
  std::vector<float> unc_;
  std::vector<PyramidLevel> pyramid_;
  std::uint64_t version_ = 0;
  bool dirty_ = false;
  Vec3i dirty_min_, dirty_max_;

  // scratch for per-image voxel dedup
  std::vector<std::uint32_t> stamp_;
  std::uint32_t stamp_cur_ = 0;
};

struct MapConfig {
  double eta = 0.6931471805599453;  // ln 2: one observation halves uncertainty
  double occ_prior = 0.5;
  InverseSensorModel ism;
  ClassifyThresholds thresholds;
  int pyramid_levels = 3;
  double clear_extent = 6.0;  // meters, initial known-free cube
};

// Fresh map over the scene grid with the initial clear box applied.
// Throws DomainError if the box does not fit inside the grid.
OccupancyMap init_map(const GridGeometry& grid, const MapConfig& cfg, const Vec3& clear_center);

void save_map(const OccupancyMap& map, const std::string& path);
OccupancyMap load_map(const std::string& path, int pyramid_levels = 3,
                      const InverseSensorModel& ism = {});

}  // namespace nbv
