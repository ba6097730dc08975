#include "nbv/scene.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "nbv/errors.hpp"
#include "nbv/io_util.hpp"
#include "nbv/rng.hpp"

namespace nbv {

std::int64_t GroundTruthScene::occupied_count() const {
  std::int64_t n = 0;
  for (const auto b : occupied) n += (b != 0);
  return n;
}

namespace {

void fill_box(GroundTruthScene& scene, const VoxelBox& box) {
  for (int z = box.min.z; z <= box.max.z; ++z)
    for (int y = box.min.y; y <= box.max.y; ++y)
      for (int x = box.min.x; x <= box.max.x; ++x)
        scene.occupied[scene.grid.linear_index(x, y, z)] = 1;
}

}  // namespace

CityScenePlan plan_city_scene(std::uint64_t seed, const CitySceneParams& params) {
  if (params.resolution <= 0.0) throw std::invalid_argument("resolution must be positive");
  if (params.building_count < 0) throw std::invalid_argument("building count must be >= 0");
  if (params.height_min > params.height_max || params.height_min <= 0.0)
    throw std::invalid_argument("invalid height range");

  const double r = params.resolution;
  Vec3i dims{static_cast<int>(std::llround(params.extent.x / r)),
             static_cast<int>(std::llround(params.extent.y / r)),
             static_cast<int>(std::llround(params.extent.z / r))};
  if (dims.x < 8 || dims.y < 8 || dims.z < 8)
    throw std::invalid_argument("extent/resolution must give at least 8 voxels per axis");

  CityScenePlan plan;
  plan.grid.dims = dims;
  plan.grid.resolution = r;
  // Voxel layer 0 sits below ground level so the slab surface is at z = r.
  plan.grid.origin = {0.0, 0.0, -r};

  plan.slab = {{1, 1, 1}, {dims.x - 2, dims.y - 2, 1}};

  Rng rng = substream(seed, "scene");
  const int foot_min = std::max(1, static_cast<int>(std::llround(params.footprint_min / r)));
  const int foot_max = std::max(foot_min, static_cast<int>(std::llround(params.footprint_max / r)));
  for (int b = 0; b < params.building_count; ++b) {
    const int wx = rng.uniform_int(foot_min, foot_max);
    const int wy = rng.uniform_int(foot_min, foot_max);
    const double h = rng.uniform(params.height_min, params.height_max);
    int hz = std::max(1, static_cast<int>(std::llround(h / r)));

    const int x_lo = 2, x_hi = dims.x - 2 - wx;
    const int y_lo = 2, y_hi = dims.y - 2 - wy;
    if (x_hi < x_lo || y_hi < y_lo) continue;  // footprint larger than the interior
    const int x0 = rng.uniform_int(x_lo, x_hi);
    const int y0 = rng.uniform_int(y_lo, y_hi);
    hz = std::min(hz, dims.z - 3);  // keep the top out of the boundary layer
    if (hz < 1) continue;
    plan.buildings.push_back({{x0, y0, 2}, {x0 + wx - 1, y0 + wy - 1, 2 + hz - 1}});
  }
  return plan;
}

GroundTruthScene rasterize(const CityScenePlan& plan) {
  GroundTruthScene scene;
  scene.grid = plan.grid;
  scene.occupied.assign(static_cast<std::size_t>(scene.grid.voxel_count()), 0);
  fill_box(scene, plan.slab);
  for (const auto& b : plan.buildings) fill_box(scene, b);
  return scene;
}

GroundTruthScene generate_city_scene(std::uint64_t seed, const CitySceneParams& params) {
  return rasterize(plan_city_scene(seed, params));
}

SurfaceSet surface_set(const GroundTruthScene& scene) {
  SurfaceSet surf;
  const auto& g = scene.grid;
  for (int z = 0; z < g.dims.z; ++z)
    for (int y = 0; y < g.dims.y; ++y)
      for (int x = 0; x < g.dims.x; ++x) {
        const std::int64_t idx = g.linear_index(x, y, z);
        if (!scene.occupied[idx]) continue;
        bool exposed = false;
        for (const auto& d : face_neighbors()) {
          const Vec3i n{x + d.x, y + d.y, z + d.z};
          if (!g.contains(n) || !scene.occupied[g.linear_index(n)]) {
            // Voxels on the grid boundary are free by the scene invariant, so
            // treating out-of-grid as free never fires for valid scenes.
            exposed = true;
            break;
          }
        }
        if (exposed) surf.voxels.push_back(idx);
      }
  return surf;
}

namespace {
constexpr char kSceneMagic[4] = {'N', 'B', 'V', 'S'};
constexpr std::uint32_t kSceneVersion = 1;
}  // namespace

void save_scene(const GroundTruthScene& scene, const std::string& path) {
  BinaryWriter w(path);
  w.write_magic(kSceneMagic);
  w.write<std::uint32_t>(kSceneVersion);
  w.write<std::uint32_t>(static_cast<std::uint32_t>(scene.grid.dims.x));
  w.write<std::uint32_t>(static_cast<std::uint32_t>(scene.grid.dims.y));
  w.write<std::uint32_t>(static_cast<std::uint32_t>(scene.grid.dims.z));
  w.write<float>(static_cast<float>(scene.grid.resolution));
  w.write<float>(static_cast<float>(scene.grid.origin.x));
  w.write<float>(static_cast<float>(scene.grid.origin.y));
  w.write<float>(static_cast<float>(scene.grid.origin.z));

  const std::int64_t n = scene.grid.voxel_count();
  std::vector<std::uint8_t> packed(static_cast<std::size_t>((n + 7) / 8), 0);
  for (std::int64_t i = 0; i < n; ++i)
    if (scene.occupied[i]) packed[i >> 3] |= static_cast<std::uint8_t>(1u << (i & 7));
  w.write_array(packed.data(), packed.size());
  w.close();
}

GroundTruthScene load_scene(const std::string& path) {
  BinaryReader r(path);
  r.expect_magic(kSceneMagic, "scene");
  const auto version = r.read<std::uint32_t>();
  if (version != kSceneVersion) throw FormatError("unsupported scene version: " + path);

  GroundTruthScene scene;
  scene.grid.dims.x = static_cast<int>(r.read<std::uint32_t>());
  scene.grid.dims.y = static_cast<int>(r.read<std::uint32_t>());
  scene.grid.dims.z = static_cast<int>(r.read<std::uint32_t>());
  scene.grid.resolution = r.read<float>();
  scene.grid.origin.x = r.read<float>();
  scene.grid.origin.y = r.read<float>();
  scene.grid.origin.z = r.read<float>();
  if (scene.grid.dims.x < 1 || scene.grid.dims.y < 1 || scene.grid.dims.z < 1 ||
      scene.grid.resolution <= 0.0f)
    throw FormatError("invalid scene header: " + path);

  const std::int64_t n = scene.grid.voxel_count();
  std::vector<std::uint8_t> packed(static_cast<std::size_t>((n + 7) / 8));
  r.read_array(packed.data(), packed.size());
  if (!r.at_eof()) throw FormatError("trailing bytes in scene file: " + path);

  scene.occupied.assign(static_cast<std::size_t>(n), 0);
  for (std::int64_t i = 0; i < n; ++i)
    scene.occupied[i] = (packed[i >> 3] >> (i & 7)) & 1u;
  return scene;
}

}  // namespace nbv
