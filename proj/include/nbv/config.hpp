#pragma once

#include <cstdint>
#include <string>

#include "nbv/features.hpp"
#include "nbv/net.hpp"
#include "nbv/occupancy.hpp"
#include "nbv/planner.hpp"
#include "nbv/scene.hpp"
#include "nbv/sensor.hpp"

namespace nbv {

struct DatasetConfig {
  int episodes = 50;
  double split_fraction = 0.8;
  bool split_by_episode = true;
};

struct TrainConfig {
  int max_epochs = 100;
  int patience = 10;
};

struct BenchmarkRunConfig {
  int episodes = 20;
  int t_end = 40;
  int probe_episodes = 3;
  int probe_t_end = 0;  // 0 means: same as t_end
};

// One bundle for everything a command needs. Defaults are the reference
// operating point; a JSON config file overrides individual keys and flags
// override the file.
struct RunConfig {
  std::uint64_t seed = 1;
  CitySceneParams scene;
  CameraModel camera;
  MapConfig map;
  FeatureConfig features;
  net::NetConfig net;
  PlannerConfig planner;
  int t_end = 200;
  NoiseModel noise;
  DatasetConfig dataset;
  TrainConfig train;
  BenchmarkRunConfig benchmark;
};

RunConfig default_config();

// Fields that other fields determine: the map pyramid must cover the feature
// levels, the net input shape is the feature sample shape, and per-component
// seeds all derive from the root seed.
void apply_derived(RunConfig& cfg);

// Throws DomainError on any out-of-range value.
void validate_config(const RunConfig& cfg);

// Both loaders start from default_config(), overlay the JSON, then apply
// derived fields and validate. Malformed JSON throws FormatError; unknown
// keys and invalid values throw DomainError.
RunConfig config_from_json_text(const std::string& text);
RunConfig load_config(const std::string& path);

}  // namespace nbv
