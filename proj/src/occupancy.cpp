#include "nbv/occupancy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "nbv/errors.hpp"
#include "nbv/io_util.hpp"
#include "nbv/raycast.hpp"

namespace nbv {

namespace {

inline float sigmoid(float l) { return 1.0f / (1.0f + std::exp(-l)); }

inline float logit(double p) {
  if (p <= 0.0) return -std::numeric_limits<float>::infinity();
  if (p >= 1.0) return std::numeric_limits<float>::infinity();
  return static_cast<float>(std::log(p / (1.0 - p)));
}

}  // namespace

OccupancyMap::OccupancyMap(const GridGeometry& grid, double eta, double occ_prior,
                           int pyramid_levels, const InverseSensorModel& ism)
    : grid_(grid), eta_(eta), occ_prior_(occ_prior), ism_(ism) {
  if (eta <= 0.0) throw std::invalid_argument("eta must be positive");
  if (occ_prior < 0.0 || occ_prior > 1.0) throw std::invalid_argument("occ_prior must be in [0,1]");
  if (pyramid_levels < 1) throw std::invalid_argument("pyramid_levels must be >= 1");

  const auto n = static_cast<std::size_t>(grid.voxel_count());
  logodds_.assign(n, logit(occ_prior));
  count_.assign(n, 0);
  occ_.assign(n, static_cast<float>(occ_prior));
  unc_.assign(n, 1.0f);
  stamp_.assign(n, 0);

  pyramid_.resize(static_cast<std::size_t>(pyramid_levels));
  for (int l = 1; l <= pyramid_levels; ++l) {
    auto& lvl = pyramid_[l - 1];
    const int s = 1 << l;
    lvl.dims = {(grid.dims.x + s - 1) / s, (grid.dims.y + s - 1) / s, (grid.dims.z + s - 1) / s};
    const auto cells = static_cast<std::size_t>(lvl.dims.x) * lvl.dims.y * lvl.dims.z;
    lvl.occ.assign(cells, 0.0f);
    lvl.unc.assign(cells, 0.0f);
  }
  dirty_ = true;
  dirty_min_ = {0, 0, 0};
  dirty_max_ = {grid.dims.x - 1, grid.dims.y - 1, grid.dims.z - 1};
  refresh_pyramid();
}

double OccupancyMap::unc_exact(std::int64_t idx) const {
  const std::uint32_t n = count_[idx];
  if (n >= kClearedCount) return 0.0;
  return std::exp(-eta_ * static_cast<double>(n));
}

VoxelClass OccupancyMap::classify(const Vec3i& v, const ClassifyThresholds& t) const {
  if (!grid_.contains(v)) throw std::out_of_range("voxel outside grid");
  const std::int64_t idx = grid_.linear_index(v);
  return classify_values(occ_[idx], unc_[idx], t);
}

VoxelClass OccupancyMap::classify_point(const Vec3& p, const ClassifyThresholds& t) const {
  if (!grid_.contains_point(p)) return VoxelClass::Unknown;
  return classify(grid_.voxel_of(p), t);
}

void OccupancyMap::mark_dirty(const Vec3i& v) {
  if (!dirty_) {
    dirty_ = true;
    dirty_min_ = dirty_max_ = v;
    return;
  }
  dirty_min_.x = std::min(dirty_min_.x, v.x);
  dirty_min_.y = std::min(dirty_min_.y, v.y);
  dirty_min_.z = std::min(dirty_min_.z, v.z);
  dirty_max_.x = std::max(dirty_max_.x, v.x);
  dirty_max_.y = std::max(dirty_max_.y, v.y);
  dirty_max_.z = std::max(dirty_max_.z, v.z);
}

void OccupancyMap::clear_box(const Vec3& center, double extent) {
  const double h = extent / 2.0;
  for (int i = 0; i < 3; ++i) {
    const double lo = center[i] - h;
    const double hi = center[i] + h;
    if (lo < grid_.origin[i] || hi > grid_.max_corner()[i])
      throw DomainError("clear box extends outside the grid");
  }
  for (int z = 0; z < grid_.dims.z; ++z) {
    const double cz = grid_.origin.z + (z + 0.5) * grid_.resolution;
    if (cz < center.z - h || cz >= center.z + h) continue;
    for (int y = 0; y < grid_.dims.y; ++y) {
      const double cy = grid_.origin.y + (y + 0.5) * grid_.resolution;
      if (cy < center.y - h || cy >= center.y + h) continue;
      for (int x = 0; x < grid_.dims.x; ++x) {
        const double cx = grid_.origin.x + (x + 0.5) * grid_.resolution;
        if (cx < center.x - h || cx >= center.x + h) continue;
        const std::int64_t idx = grid_.linear_index(x, y, z);
        logodds_[idx] = -std::numeric_limits<float>::infinity();
        count_[idx] = kClearedCount;
        occ_[idx] = 0.0f;
        unc_[idx] = 0.0f;
        mark_dirty({x, y, z});
      }
    }
  }
  refresh_pyramid();
}

void OccupancyMap::apply_update(std::int64_t idx, bool hit) {
  if (std::isinf(logodds_[idx])) {
    // Exactly-known free space: free evidence keeps occ at 0; occupied
    // evidence re-enters the clamped range and accumulates normally.
    if (hit) logodds_[idx] = std::clamp(-ism_.l_clamp + ism_.l_occ, -ism_.l_clamp, ism_.l_clamp);
  } else {
    const float l = hit ? ism_.l_occ : ism_.l_free;
    logodds_[idx] = std::clamp(logodds_[idx] + l, -ism_.l_clamp, ism_.l_clamp);
  }
  if (count_[idx] < kClearedCount) count_[idx] += 1;
  occ_[idx] = sigmoid(logodds_[idx]);
  unc_[idx] = static_cast<float>(unc_exact(idx));
}

UpdateStats OccupancyMap::integrate_measurement(const Pose& pose, const DepthImage& depth,
                                                const CameraModel& camera) {
  if (depth.width != camera.width || depth.height != camera.height)
    throw std::invalid_argument("depth image does not match camera dimensions");

  // Pass 1: mark measurement endpoints so a voxel that is a hit for one ray
  // and a pass-through for another gets the occupied update.
  if (stamp_cur_ >= std::numeric_limits<std::uint32_t>::max() - 2) {
    std::fill(stamp_.begin(), stamp_.end(), 0);
    stamp_cur_ = 0;
  }
  const std::uint32_t hit_stamp = ++stamp_cur_;
  const std::uint32_t done_stamp = ++stamp_cur_;

  const int n = camera.pixel_count();
  for (int p = 0; p < n; ++p) {
    const float d = depth.depth[p];
    if (!std::isfinite(d)) continue;
    const Vec3 dir = camera.pixel_ray(pose, p % camera.width, p / camera.width);
    trace_measurement_ray(grid_, pose.position, dir, d, camera.max_range,
                          [&](const Vec3i& v, bool endpoint) {
                            if (endpoint) stamp_[grid_.linear_index(v)] = hit_stamp;
                            return true;
                          });
  }

  // Pass 2: apply one update per touched voxel.
  UpdateStats stats;
  for (int p = 0; p < n; ++p) {
    const float d = depth.depth[p];
    const Vec3 dir = camera.pixel_ray(pose, p % camera.width, p / camera.width);
    trace_measurement_ray(grid_, pose.position, dir, d, camera.max_range,
                          [&](const Vec3i& v, bool) {
                            const std::int64_t idx = grid_.linear_index(v);
                            if (stamp_[idx] == done_stamp) return true;
                            const bool hit = stamp_[idx] == hit_stamp;
                            stamp_[idx] = done_stamp;
                            apply_update(idx, hit);
                            mark_dirty(v);
                            stats.voxels_touched += 1;
                            stats.hits += hit;
                            stats.frees += !hit;
                            return true;
                          });
  }

  version_ += 1;
  refresh_pyramid();
  return stats;
}

void OccupancyMap::refresh_pyramid() {
  if (!dirty_) return;
  for (int l = 1; l <= pyramid_levels(); ++l) {
    auto& lvl = pyramid_[l - 1];
    const int s = 1 << l;
    const Vec3i lo{dirty_min_.x / s, dirty_min_.y / s, dirty_min_.z / s};
    const Vec3i hi{dirty_max_.x / s, dirty_max_.y / s, dirty_max_.z / s};
    for (int cz = lo.z; cz <= hi.z; ++cz)
      for (int cy = lo.y; cy <= hi.y; ++cy)
        for (int cx = lo.x; cx <= hi.x; ++cx) {
          double occ_sum = 0.0, unc_sum = 0.0;
          if (l == 1) {
            for (int dz = 0; dz < 2; ++dz)
              for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                  const Vec3i v{cx * 2 + dx, cy * 2 + dy, cz * 2 + dz};
                  if (grid_.contains(v)) {
                    const std::int64_t idx = grid_.linear_index(v);
                    occ_sum += occ_[idx];
                    unc_sum += unc_[idx];
                  } else {
                    occ_sum += occ_prior_;
                    unc_sum += 1.0;
                  }
                }
          } else {
            // Children cover equal volumes (padding included), so the mean of
            // the eight child means is the mean over the whole cube.
            const auto& child = pyramid_[l - 2];
            for (int dz = 0; dz < 2; ++dz)
              for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                  const Vec3i c{cx * 2 + dx, cy * 2 + dy, cz * 2 + dz};
                  if (c.x < child.dims.x && c.y < child.dims.y && c.z < child.dims.z) {
                    const std::int64_t idx =
                        (static_cast<std::int64_t>(c.z) * child.dims.y + c.y) * child.dims.x + c.x;
                    occ_sum += child.occ[idx];
                    unc_sum += child.unc[idx];
                  } else {
                    occ_sum += occ_prior_;
                    unc_sum += 1.0;
                  }
                }
          }
          const std::int64_t idx =
              (static_cast<std::int64_t>(cz) * lvl.dims.y + cy) * lvl.dims.x + cx;
          lvl.occ[idx] = static_cast<float>(occ_sum / 8.0);
          lvl.unc[idx] = static_cast<float>(unc_sum / 8.0);
        }
  }
  dirty_ = false;
}

std::pair<double, double> OccupancyMap::multiscale_average(const Vec3& p, int level) const {
  if (level < 1 || level > pyramid_levels())
    throw std::invalid_argument("pyramid level out of range");
  const auto& lvl = pyramid_[level - 1];
  const double s = grid_.resolution * (1 << level);

  double occ_acc = 0.0, unc_acc = 0.0;
  int base[3];
  double frac[3];
  for (int i = 0; i < 3; ++i) {
    const double u = (p[i] - grid_.origin[i]) / s - 0.5;
    const double fl = std::floor(u);
    base[i] = static_cast<int>(fl);
    frac[i] = u - fl;
  }
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const int cx = base[0] + dx;
        const int cy = base[1] + dy;
        const int cz = base[2] + dz;
        const double w = (dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]) *
                         (dz ? frac[2] : 1.0 - frac[2]);
        if (w == 0.0) continue;
        double o, u;
        if (cx < 0 || cy < 0 || cz < 0 || cx >= lvl.dims.x || cy >= lvl.dims.y ||
            cz >= lvl.dims.z) {
          o = occ_prior_;
          u = 1.0;
        } else {
          const std::int64_t idx =
              (static_cast<std::int64_t>(cz) * lvl.dims.y + cy) * lvl.dims.x + cx;
          o = lvl.occ[idx];
          u = lvl.unc[idx];
        }
        occ_acc += w * o;
        unc_acc += w * u;
      }
  return {occ_acc, unc_acc};
}

OccupancyMap init_map(const GridGeometry& grid, const MapConfig& cfg, const Vec3& clear_center) {
  OccupancyMap map(grid, cfg.eta, cfg.occ_prior, cfg.pyramid_levels, cfg.ism);
  map.clear_box(clear_center, cfg.clear_extent);
  return map;
}

namespace {
constexpr char kMapMagic[4] = {'N', 'B', 'V', 'M'};
constexpr std::uint32_t kMapVersion = 1;
}  // namespace

void save_map(const OccupancyMap& map, const std::string& path) {
  BinaryWriter w(path);
  w.write_magic(kMapMagic);
  w.write<std::uint32_t>(kMapVersion);
  const auto& g = map.grid();
  w.write<std::uint32_t>(static_cast<std::uint32_t>(g.dims.x));
  w.write<std::uint32_t>(static_cast<std::uint32_t>(g.dims.y));
  w.write<std::uint32_t>(static_cast<std::uint32_t>(g.dims.z));
  w.write<float>(static_cast<float>(g.resolution));
  w.write<float>(static_cast<float>(g.origin.x));
  w.write<float>(static_cast<float>(g.origin.y));
  w.write<float>(static_cast<float>(g.origin.z));
  w.write<float>(static_cast<float>(map.eta()));
  const std::int64_t n = g.voxel_count();
  for (std::int64_t i = 0; i < n; ++i) w.write<float>(map.occ(i));
  for (std::int64_t i = 0; i < n; ++i) w.write<float>(map.unc(i));
  w.close();
}

OccupancyMap load_map(const std::string& path, int pyramid_levels,
                      const InverseSensorModel& ism) {
  BinaryReader r(path);
  r.expect_magic(kMapMagic, "map");
  if (r.read<std::uint32_t>() != kMapVersion)
    throw FormatError("unsupported map version: " + path);

  GridGeometry g;
  g.dims.x = static_cast<int>(r.read<std::uint32_t>());
  g.dims.y = static_cast<int>(r.read<std::uint32_t>());
  g.dims.z = static_cast<int>(r.read<std::uint32_t>());
  g.resolution = r.read<float>();
  g.origin.x = r.read<float>();
  g.origin.y = r.read<float>();
  g.origin.z = r.read<float>();
  const double eta = r.read<float>();
  if (g.dims.x < 1 || g.dims.y < 1 || g.dims.z < 1 || g.resolution <= 0.0 || eta <= 0.0)
    throw FormatError("invalid map header: " + path);

  OccupancyMap map(g, eta, 0.5, pyramid_levels, ism);
  const std::int64_t n = g.voxel_count();
  std::vector<float> occ(static_cast<std::size_t>(n)), unc(static_cast<std::size_t>(n));
  r.read_array(occ.data(), occ.size());
  r.read_array(unc.data(), unc.size());
  if (!r.at_eof()) throw FormatError("trailing bytes in map file: " + path);
  map.restore_fields(occ, unc);
  return map;
}

void OccupancyMap::restore_fields(const std::vector<float>& occ, const std::vector<float>& unc) {
  const std::int64_t n = grid_.voxel_count();
  for (std::int64_t i = 0; i < n; ++i) {
    occ_[i] = occ[i];
    logodds_[i] = logit(occ[i]);
    unc_[i] = unc[i];
    if (unc[i] <= 0.0f)
      count_[i] = kClearedCount;
    else
      count_[i] = static_cast<std::uint32_t>(
          std::max<std::int64_t>(0, std::llround(-std::log(static_cast<double>(unc[i])) / eta_)));
  }
  dirty_ = true;
  dirty_min_ = {0, 0, 0};
  dirty_max_ = {grid_.dims.x - 1, grid_.dims.y - 1, grid_.dims.z - 1};
  refresh_pyramid();
}

}  // namespace nbv
