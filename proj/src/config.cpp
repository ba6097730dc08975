#include "nbv/config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "nbv/errors.hpp"
#include "nbv/rng.hpp"

namespace nbv {
namespace {

using json = nlohmann::json;

[[noreturn]] void bad(const std::string& msg) { throw DomainError("config: " + msg); }

double as_number(const json& v, const std::string& key) {
  if (!v.is_number()) bad("key '" + key + "' must be a number");
  return v.get<double>();
}

int as_int(const json& v, const std::string& key) {
  if (!v.is_number_integer()) bad("key '" + key + "' must be an integer");
  return v.get<int>();
}

std::uint64_t as_u64(const json& v, const std::string& key) {
  if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0))
    bad("key '" + key + "' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

bool as_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) bad("key '" + key + "' must be a boolean");
  return v.get<bool>();
}

Vec3 as_vec3(const json& v, const std::string& key) {
  if (!v.is_array() || v.size() != 3) bad("key '" + key + "' must be an array of 3 numbers");
  Vec3 out;
  out.x = as_number(v[0], key);
  out.y = as_number(v[1], key);
  out.z = as_number(v[2], key);
  return out;
}

Vec3i as_dims(const json& v, const std::string& key) {
  if (!v.is_array() || v.size() != 3) bad("key '" + key + "' must be an array of 3 integers");
  Vec3i out;
  out.x = as_int(v[0], key);
  out.y = as_int(v[1], key);
  out.z = as_int(v[2], key);
  return out;
}

const json& expect_object(const json& v, const std::string& key) {
  if (!v.is_object()) bad("key '" + key + "' must be an object");
  return v;
}

void parse_scene(const json& j, CitySceneParams& s) {
  for (const auto& [key, v] : j.items()) {
    const std::string full = "scene." + key;
    if (key == "extent")
      s.extent = as_vec3(v, full);
    else if (key == "resolution")
      s.resolution = as_number(v, full);
    else if (key == "building_count")
      s.building_count = as_int(v, full);
    else if (key == "height_min")
      s.height_min = as_number(v, full);
    else if (key == "height_max")
      s.height_max = as_number(v, full);
    else if (key == "footprint_min")
      s.footprint_min = as_number(v, full);
    else if (key == "footprint_max")
      s.footprint_max = as_number(v, full);
    else
      bad("unknown key '" + full + "'");
  }
}

void parse_camera(const json& j, CameraModel& c) {
  for (const auto& [key, v] : j.items()) {
    const std::string full = "camera." + key;
    if (key == "width")
      c.width = as_int(v, full);
    else if (key == "height")
      c.height = as_int(v, full);
    else if (key == "horizontal_fov_deg")
      c.horizontal_fov_deg = as_number(v, full);
    else if (key == "max_range")
      c.max_range = as_number(v, full);
    else
      bad("unknown key '" + full + "'");
  }
}

void parse_map(const json& j, MapConfig& m) {
  for (const auto& [key, v] : j.items()) {
    const std::string full = "map." + key;
    if (key == "eta")
      m.eta = as_number(v, full);
    else if (key == "occ_prior")
      m.occ_prior = as_number(v, full);
    else if (key == "l_occ")
      m.ism.l_occ = static_cast<float>(as_number(v, full));
    else if (key == "l_free")
      m.ism.l_free = static_cast<float>(as_number(v, full));
    else if (key == "l_clamp")
      m.ism.l_clamp = static_cast<float>(as_number(v, full));
    else if (key == "occ_free_max")
      m.thresholds.occ_free_max = as_number(v, full);
    else if (key == "occ_occupied_min")
      m.thresholds.occ_occupied_min = as_number(v, full);
    else if (key == "unc_known_max")
      m.thresholds.unc_known_max = as_number(v, full);
    else if (key == "clear_extent")
      m.clear_extent = as_number(v, full);
    else
      bad("unknown key '" + full + "'");
  }
}

void parse_features(const json& j, FeatureConfig& f) {
  for (const auto& [key, v] : j.items()) {
    const std::string full = "features." + key;
    if (key == "dims")
      f.dims = as_dims(v, full);
    else if (key == "levels")
      f.levels = as_int(v, full);
    else
      bad("unknown key '" + full + "'");
  }
}

void parse_net(const json& j, net::NetConfig& n) {
  for (const auto& [key, v] : j.items()) {
    const std::string full = "net." + key;
    if (key == "blocks")
      n.n_blocks = as_int(v, full);
    else if (key == "units_per_block")
      n.units_per_block = as_int(v, full);
    else if (key == "filters_increment")
      n.filters_increment = as_int(v, full);
    else if (key == "hidden1")
      n.hidden1 = as_int(v, full);
    else if (key == "hidden2")
      n.hidden2 = as_int(v, full);
    else if (key == "lambda")
      n.lambda = as_number(v, full);
    else if (key == "dropout")
      n.dropout_rate = as_number(v, full);
    else if (key == "learning_rate")
      n.learning_rate = as_number(v, full);
    else if (key == "batch_size")
      n.batch_size = as_int(v, full);
    else if (key == "adam_beta1")
      n.adam_beta1 = as_number(v, full);
    else if (key == "adam_beta2")
      n.adam_beta2 = as_number(v, full);
    else if (key == "adam_eps")
      n.adam_eps = as_number(v, full);
    else if (key == "regularize_all")
      n.regularize_all = as_bool(v, full);
    else if (key == "normalize_targets")
      n.normalize_targets = as_bool(v, full);
    else
      bad("unknown key '" + full + "'");
  }
}

void parse_planner(const json& j, RunConfig& cfg) {
  for (const auto& [key, v] : j.items()) {
    const std::string full = "planner." + key;
    if (key == "step")
      cfg.planner.step = as_number(v, full);
    else if (key == "yaw_step_deg")
      cfg.planner.yaw_step_deg = as_number(v, full);
    else if (key == "collision_edge")
      cfg.planner.collision_edge = as_number(v, full);
    else if (key == "max_start_attempts")
      cfg.planner.max_start_attempts = as_int(v, full);
    else if (key == "t_end")
      cfg.t_end = as_int(v, full);
    else
      bad("unknown key '" + full + "'");
  }
}

void parse_noise(const json& j, NoiseModel& n) {
  for (const auto& [key, v] : j.items()) {
    const std::string full = "noise." + key;
    if (key == "drop_fraction")
      n.drop_fraction = as_number(v, full);
    else if (key == "sigma")
      n.sigma = as_number(v, full);
    else
      bad("unknown key '" + full + "'");
  }
}

void parse_dataset(const json& j, DatasetConfig& d) {
  for (const auto& [key, v] : j.items()) {
    const std::string full = "dataset." + key;
    if (key == "episodes")
      d.episodes = as_int(v, full);
    else if (key == "split_fraction")
      d.split_fraction = as_number(v, full);
    else if (key == "split_by_episode")
      d.split_by_episode = as_bool(v, full);
    else
      bad("unknown key '" + full + "'");
  }
}

void parse_train(const json& j, TrainConfig& t) {
  for (const auto& [key, v] : j.items()) {
    const std::string full = "train." + key;
    if (key == "max_epochs")
      t.max_epochs = as_int(v, full);
    else if (key == "patience")
      t.patience = as_int(v, full);
    else
      bad("unknown key '" + full + "'");
  }
}

void parse_benchmark(const json& j, BenchmarkRunConfig& b) {
  for (const auto& [key, v] : j.items()) {
    const std::string full = "benchmark." + key;
    if (key == "episodes")
      b.episodes = as_int(v, full);
    else if (key == "t_end")
      b.t_end = as_int(v, full);
    else if (key == "probe_episodes")
      b.probe_episodes = as_int(v, full);
    else if (key == "probe_t_end")
      b.probe_t_end = as_int(v, full);
    else
      bad("unknown key '" + full + "'");
  }
}

void overlay_json(RunConfig& cfg, const json& root) {
  if (!root.is_object()) bad("top-level value must be an object");
  for (const auto& [key, v] : root.items()) {
    if (key == "seed")
      cfg.seed = as_u64(v, "seed");
    else if (key == "scene")
      parse_scene(expect_object(v, key), cfg.scene);
    else if (key == "camera")
      parse_camera(expect_object(v, key), cfg.camera);
    else if (key == "map")
      parse_map(expect_object(v, key), cfg.map);
    else if (key == "features")
      parse_features(expect_object(v, key), cfg.features);
    else if (key == "net")
      parse_net(expect_object(v, key), cfg.net);
    else if (key == "planner")
      parse_planner(expect_object(v, key), cfg);
    else if (key == "noise")
      parse_noise(expect_object(v, key), cfg.noise);
    else if (key == "dataset")
      parse_dataset(expect_object(v, key), cfg.dataset);
    else if (key == "train")
      parse_train(expect_object(v, key), cfg.train);
    else if (key == "benchmark")
      parse_benchmark(expect_object(v, key), cfg.benchmark);
    else
      bad("unknown key '" + key + "'");
  }
}

void check(bool ok, const char* msg) {
  if (!ok) bad(msg);
}

}  // namespace

RunConfig default_config() {
  RunConfig cfg;
  apply_derived(cfg);
  return cfg;
}

void apply_derived(RunConfig& cfg) {
  cfg.map.pyramid_levels = cfg.features.levels;
  cfg.net.input_dims = cfg.features.dims;
  cfg.net.input_channels = 2 * cfg.features.levels;
  cfg.net.seed = cfg.seed;
  cfg.noise.seed = substream_seed(cfg.seed, "noise");
}

void validate_config(const RunConfig& cfg) {
  const auto& s = cfg.scene;
  check(s.resolution > 0.0, "scene.resolution must be > 0");
  check(s.extent.x > 0.0 && s.extent.y > 0.0 && s.extent.z > 0.0,
        "scene.extent components must be > 0");
  check(s.building_count >= 0, "scene.building_count must be >= 0");
  check(s.height_min > 0.0 && s.height_max >= s.height_min,
        "scene height range must satisfy 0 < min <= max");
  check(s.footprint_min > 0.0 && s.footprint_max >= s.footprint_min,
        "scene footprint range must satisfy 0 < min <= max");

  const auto& c = cfg.camera;
  check(c.width >= 1 && c.height >= 1, "camera resolution must be >= 1x1");
  check(c.horizontal_fov_deg > 0.0 && c.horizontal_fov_deg < 180.0,
        "camera.horizontal_fov_deg must be in (0, 180)");
  check(c.max_range > 0.0, "camera.max_range must be > 0");

  const auto& m = cfg.map;
  check(m.eta > 0.0, "map.eta must be > 0");
  check(m.occ_prior > 0.0 && m.occ_prior < 1.0, "map.occ_prior must be in (0, 1)");
  check(m.ism.l_occ > 0.0f, "map.l_occ must be > 0");
  check(m.ism.l_free < 0.0f, "map.l_free must be < 0");
  check(m.ism.l_clamp >= m.ism.l_occ && m.ism.l_clamp >= -m.ism.l_free,
        "map.l_clamp must bound both update magnitudes");
  check(m.thresholds.occ_free_max >= 0.0 && m.thresholds.occ_free_max <= 1.0 &&
            m.thresholds.occ_occupied_min >= 0.0 && m.thresholds.occ_occupied_min <= 1.0 &&
            m.thresholds.occ_free_max <= m.thresholds.occ_occupied_min,
        "map classification thresholds must satisfy 0 <= free_max <= occupied_min <= 1");
  check(m.thresholds.unc_known_max > 0.0 && m.thresholds.unc_known_max < 1.0,
        "map.unc_known_max must be in (0, 1)");
  check(m.clear_extent > 0.0, "map.clear_extent must be > 0");

  const auto& f = cfg.features;
  check(f.levels >= 1, "features.levels must be >= 1");
  check(f.dims.x >= 1 && f.dims.y >= 1 && f.dims.z >= 1, "features.dims must be >= 1");

  const auto& n = cfg.net;
  check(n.n_blocks >= 1, "net.blocks must be >= 1");
  check(n.units_per_block >= 1, "net.units_per_block must be >= 1");
  check(n.filters_increment >= 1, "net.filters_increment must be >= 1");
  check(n.hidden1 >= 1 && n.hidden2 >= 1, "net hidden widths must be >= 1");
  check(n.lambda >= 0.0, "net.lambda must be >= 0");
  check(n.dropout_rate >= 0.0 && n.dropout_rate < 1.0, "net.dropout must be in [0, 1)");
  check(n.learning_rate > 0.0, "net.learning_rate must be > 0");
  check(n.batch_size >= 1, "net.batch_size must be >= 1");
  check(n.adam_beta1 >= 0.0 && n.adam_beta1 < 1.0 && n.adam_beta2 >= 0.0 && n.adam_beta2 < 1.0,
        "adam betas must be in [0, 1)");
  check(n.adam_eps > 0.0, "net.adam_eps must be > 0");

  const auto& p = cfg.planner;
  check(p.step > 0.0, "planner.step must be > 0");
  check(p.yaw_step_deg > 0.0 && p.yaw_step_deg <= 180.0,
        "planner.yaw_step_deg must be in (0, 180]");
  check(p.collision_edge > 0.0, "planner.collision_edge must be > 0");
  check(p.max_start_attempts >= 1, "planner.max_start_attempts must be >= 1");
  check(cfg.t_end >= 0, "planner.t_end must be >= 0");

  check(cfg.noise.drop_fraction >= 0.0 && cfg.noise.drop_fraction <= 1.0,
        "noise.drop_fraction must be in [0, 1]");
  check(cfg.noise.sigma >= 0.0, "noise.sigma must be >= 0");

  check(cfg.dataset.episodes >= 1, "dataset.episodes must be >= 1");
  check(cfg.dataset.split_fraction > 0.0 && cfg.dataset.split_fraction <= 1.0,
        "dataset.split_fraction must be in (0, 1]");
  check(cfg.train.max_epochs >= 1, "train.max_epochs must be >= 1");
  check(cfg.train.patience >= 0, "train.patience must be >= 0");
  check(cfg.benchmark.episodes >= 1, "benchmark.episodes must be >= 1");
  check(cfg.benchmark.t_end >= 1, "benchmark.t_end must be >= 1");
  check(cfg.benchmark.probe_episodes >= 0, "benchmark.probe_episodes must be >= 0");
  check(cfg.benchmark.probe_t_end >= 0, "benchmark.probe_t_end must be >= 0");
}

RunConfig config_from_json_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  overlay_json(cfg, root);
  apply_derived(cfg);
  validate_config(cfg);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_json_text(buf.str());
}

}  // namespace nbv
