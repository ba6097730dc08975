#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace nbv {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3() = default;
  Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    const double n = norm();
    return {x / n, y / n, z / n};
  }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

struct Vec3i {
  int x = 0;
  int y = 0;
  int z = 0;

  Vec3i() = default;
  Vec3i(int x_, int y_, int z_) : x(x_), y(y_), z(z_) {}

  bool operator==(const Vec3i& o) const { return x == o.x && y == o.y && z == o.z; }
  int operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  int& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
};

// Sensor pose: position plus yaw about +z. The camera never pitches or rolls.
struct Pose {
  Vec3 position;
  double yaw = 0.0;

  Vec3 forward() const { return {std::cos(yaw), std::sin(yaw), 0.0}; }
  // Right-handed with z up: right = forward x up.
  Vec3 right() const { return {std::sin(yaw), -std::cos(yaw), 0.0}; }
  Vec3 up() const { return {0.0, 0.0, 1.0}; }
};

inline double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * M_PI);
  if (a < 0.0) a += 2.0 * M_PI;
  return a;
}

// Regular grid shared by scenes and belief maps: `dims` voxels of edge
// `resolution`, with `origin` at the min corner of voxel (0,0,0).
struct GridGeometry {
  Vec3i dims;
  double resolution = 0.0;
  Vec3 origin;

  std::int64_t voxel_count() const {
    return static_cast<std::int64_t>(dims.x) * dims.y * dims.z;
  }

  // x-fastest linear index
  std::int64_t linear_index(int ix, int iy, int iz) const {
    return (static_cast<std::int64_t>(iz) * dims.y + iy) * dims.x + ix;
  }
  std::int64_t linear_index(const Vec3i& v) const { return linear_index(v.x, v.y, v.z); }

  Vec3i delinearize(std::int64_t idx) const {
    const int ix = static_cast<int>(idx % dims.x);
    const int iy = static_cast<int>((idx / dims.x) % dims.y);
    const int iz = static_cast<int>(idx / (static_cast<std::int64_t>(dims.x) * dims.y));
    return {ix, iy, iz};
  }

  bool contains(const Vec3i& v) const {
    return v.x >= 0 && v.y >= 0 && v.z >= 0 && v.x < dims.x && v.y < dims.y && v.z < dims.z;
  }

  Vec3i voxel_of(const Vec3& p) const {
    return {static_cast<int>(std::floor((p.x - origin.x) / resolution)),
            static_cast<int>(std::floor((p.y - origin.y) / resolution)),
            static_cast<int>(std::floor((p.z - origin.z) / resolution))};
  }

  Vec3 voxel_center(const Vec3i& v) const {
    return {origin.x + (v.x + 0.5) * resolution, origin.y + (v.y + 0.5) * resolution,
            origin.z + (v.z + 0.5) * resolution};
  }

  Vec3 voxel_min(const Vec3i& v) const {
    return {origin.x + v.x * resolution, origin.y + v.y * resolution,
            origin.z + v.z * resolution};
  }

  Vec3 max_corner() const {
    return {origin.x + dims.x * resolution, origin.y + dims.y * resolution,
            origin.z + dims.z * resolution};
  }

  bool contains_point(const Vec3& p) const {
    const Vec3 mx = max_corner();
    return p.x >= origin.x && p.y >= origin.y && p.z >= origin.z && p.x < mx.x && p.y < mx.y &&
           p.z < mx.z;
  }

  bool operator==(const GridGeometry& o) const {
    return dims == o.dims && resolution == o.resolution && origin.x == o.origin.x &&
           origin.y == o.origin.y && origin.z == o.origin.z;
  }
};

// Offsets of the 6 face neighbors.
inline const std::array<Vec3i, 6>& face_neighbors() {
  static const std::array<Vec3i, 6> k = {Vec3i{1, 0, 0},  Vec3i{-1, 0, 0}, Vec3i{0, 1, 0},
                                         Vec3i{0, -1, 0}, Vec3i{0, 0, 1},  Vec3i{0, 0, -1}};
  return k;
}

}  // namespace nbv
