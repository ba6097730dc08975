#pragma once

// Shared helpers for the test suites: scratch directories, hand-built scenes,
// and an independent segment/voxel enumeration used to cross-check the
// traversal kernels without reusing their implementation.

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "nbv/geometry.hpp"
#include "nbv/scene.hpp"

namespace testutil {

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<std::uint64_t> counter{0};
    const auto base = std::filesystem::temp_directory_path();
    path_ = base / ("nbv_test_" + std::to_string(static_cast<long>(::getpid())) + "_" +
                    std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::vector<char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_bytes(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline void truncate_file(const std::string& src, const std::string& dst, std::size_t keep) {
  auto bytes = read_bytes(src);
  if (keep < bytes.size()) bytes.resize(keep);
  write_bytes(dst, bytes);
}

inline nbv::GroundTruthScene make_empty_scene(nbv::Vec3i dims, double r,
                                              nbv::Vec3 origin = {0.0, 0.0, 0.0}) {
  nbv::GroundTruthScene s;
  s.grid.dims = dims;
  s.grid.resolution = r;
  s.grid.origin = origin;
  s.occupied.assign(static_cast<std::size_t>(s.grid.voxel_count()), 0);
  return s;
}

inline void fill_voxel_box(nbv::GroundTruthScene& s, nbv::Vec3i lo, nbv::Vec3i hi) {
  for (int z = lo.z; z <= hi.z; ++z)
    for (int y = lo.y; y <= hi.y; ++y)
      for (int x = lo.x; x <= hi.x; ++x) s.occupied[s.grid.linear_index(x, y, z)] = 1;
}

// Wall spanning the full y/z cross-section at x index `wx`.
inline nbv::GroundTruthScene make_wall_scene(nbv::Vec3i dims, double r, int wx) {
  auto s = make_empty_scene(dims, r);
  fill_voxel_box(s, {wx, 0, 0}, {wx, dims.y - 1, dims.z - 1});
  return s;
}

// Independent enumeration of the voxels pierced by the segment
// [origin, origin + t_max * dir]: gathers every grid-plane crossing parameter,
// then identifies the voxel between consecutive crossings by its midpoint.
// Intended for generic rays (not exactly along grid planes).
inline std::set<std::int64_t> crossing_walk(const nbv::GridGeometry& g, const nbv::Vec3& o,
                                            const nbv::Vec3& dir, double t_max) {
  std::vector<double> ts{0.0, t_max};
  for (int axis = 0; axis < 3; ++axis) {
    const double d = dir[axis];
    if (d == 0.0) continue;
    const int n = axis == 0 ? g.dims.x : (axis == 1 ? g.dims.y : g.dims.z);
    for (int k = 0; k <= n; ++k) {
      const double boundary = g.origin[axis] + k * g.resolution;
      const double t = (boundary - o[axis]) / d;
      if (t > 0.0 && t < t_max) ts.push_back(t);
    }
  }
  std::sort(ts.begin(), ts.end());
  std::set<std::int64_t> out;
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    if (ts[i + 1] - ts[i] < 1e-12) continue;  // degenerate corner crossing
    const double tm = 0.5 * (ts[i] + ts[i + 1]);
    const nbv::Vec3 p{o.x + tm * dir.x, o.y + tm * dir.y, o.z + tm * dir.z};
    if (!g.contains_point(p)) continue;
    out.insert(g.linear_index(g.voxel_of(p)));
  }
  return out;
}

}  // namespace testutil
