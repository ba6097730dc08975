#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nbv/features.hpp"
#include "nbv/occupancy.hpp"
#include "nbv/planner.hpp"
#include "nbv/scene.hpp"
#include "nbv/sensor.hpp"

namespace nbv {

// One training sample: the multi-scale tensor for a candidate neighbor and
// the oracle score it would have earned, plus enough metadata for grouped
// splits.
struct Sample {
  std::vector<float> input;  // MultiScaleSample::values layout
  float target = 0.0f;
  std::uint32_t episode = 0;
  std::uint32_t step = 0;
  std::uint32_t neighbor = 0;
};

struct Dataset {
  Vec3i dims{0, 0, 0};
  int levels = 0;
  std::vector<Sample> samples;

  std::size_t sample_values() const {
    return static_cast<std::size_t>(dims.x) * dims.y * dims.z * 2 * levels;
  }
};

// Runs oracle-driven episodes and records, per step, one sample for every
// collision-free eligible neighbor of the current pose: features from the
// current map, target from the oracle. Episodes run in parallel; the merge
// is ordered by episode id, so output is thread-count independent.
Dataset generate_dataset(const GroundTruthScene& scene, const CameraModel& camera,
                         const MapConfig& map_cfg, const PlannerConfig& pcfg,
                         const FeatureConfig& features, int episodes, int t_end,
                         std::uint64_t seed);

struct SplitIndices {
  std::vector<std::size_t> train, val;
};

// Shuffled disjoint split. By sample: train gets round(n * fraction).
// By episode (leakage-safe default): episodes are shuffled and rounded
// instead, and samples follow their episode.
SplitIndices split_dataset(const Dataset& ds, double fraction, std::uint64_t seed,
                           bool by_episode);

struct DatasetStats {
  std::size_t count = 0;
  double target_mean = 0.0, target_std = 0.0, target_min = 0.0, target_max = 0.0;
  std::vector<double> channel_means;
};

DatasetStats dataset_stats(const Dataset& ds);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace nbv
