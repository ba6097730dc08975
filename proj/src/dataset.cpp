#include "nbv/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "nbv/errors.hpp"
#include "nbv/io_util.hpp"
#include "nbv/oracle.hpp"
#include "nbv/rng.hpp"

namespace nbv {

namespace {

class SampleRecorder : public StepObserver {
 public:
  SampleRecorder(const OracleContext& octx, const FeatureConfig& features,
                 std::uint32_t episode, std::vector<Sample>& out)
      : octx_(&octx), features_(features), episode_(episode), out_(&out) {}

  void on_step(const OccupancyMap& map, int t, const Pose&,
               const std::vector<std::pair<int, Pose>>& eligible) override {
    for (const auto& [neighbor, pose] : eligible) {
      Sample s;
      s.input = extract(map, pose, features_).values;
      s.target = static_cast<float>(oracle_score(map, pose, *octx_));
      s.episode = episode_;
      s.step = static_cast<std::uint32_t>(t);
      s.neighbor = static_cast<std::uint32_t>(neighbor);
      out_->push_back(std::move(s));
    }
  }

 private:
  const OracleContext* octx_;
  FeatureConfig features_;
  std::uint32_t episode_;
  std::vector<Sample>* out_;
};

}  // namespace

Dataset generate_dataset(const GroundTruthScene& scene, const CameraModel& camera,
                         const MapConfig& map_cfg, const PlannerConfig& pcfg,
                         const FeatureConfig& features, int episodes, int t_end,
                         std::uint64_t seed) {
  if (episodes < 1) throw DomainError("episodes must be >= 1");
  if (features.levels > map_cfg.pyramid_levels)
    throw DomainError("feature levels exceed the map pyramid");

  const OracleContext octx(scene, camera);
  std::vector<std::vector<Sample>> shards(episodes);
  std::vector<std::string> failures(episodes);

#pragma omp parallel for schedule(dynamic)
  for (int ep = 0; ep < episodes; ++ep) {
    try {
      Rng start_rng(substream(seed, "start", static_cast<std::uint64_t>(ep)));
      const Pose start = sample_start(scene, map_cfg, pcfg, start_rng);
      OracleUtility oracle(octx);
      SampleRecorder recorder(octx, features, static_cast<std::uint32_t>(ep), shards[ep]);
      EpisodeRunOptions opts;
      opts.t_end = t_end;
      run_episode(scene, octx, camera, map_cfg, pcfg, oracle, start, opts, &recorder);
    } catch (const std::exception& e) {
      failures[ep] = e.what();
    }
  }
  for (int ep = 0; ep < episodes; ++ep)
    if (!failures[ep].empty())
      throw DomainError("episode " + std::to_string(ep) + ": " + failures[ep]);

  Dataset ds;
  ds.dims = features.dims;
  ds.levels = features.levels;
  for (auto& shard : shards)
    for (Sample& s : shard) ds.samples.push_back(std::move(s));
  return ds;
}

SplitIndices split_dataset(const Dataset& ds, double fraction, std::uint64_t seed,
                           bool by_episode) {
  if (ds.samples.empty()) throw DomainError("cannot split an empty dataset");
  if (!(fraction > 0.0 && fraction < 1.0)) throw DomainError("fraction must be in (0, 1)");
  Rng rng(substream(seed, "split"));
  SplitIndices out;

  if (by_episode) {
    std::vector<std::uint32_t> eps;
    for (const Sample& s : ds.samples) eps.push_back(s.episode);
    std::sort(eps.begin(), eps.end());
    eps.erase(std::unique(eps.begin(), eps.end()), eps.end());
    for (std::size_t i = eps.size(); i > 1; --i)
      std::swap(eps[i - 1], eps[rng.next_below(i)]);
    const std::size_t n_train =
        static_cast<std::size_t>(std::llround(static_cast<double>(eps.size()) * fraction));
    std::vector<std::uint32_t> train_eps(eps.begin(), eps.begin() + n_train);
    std::sort(train_eps.begin(), train_eps.end());
    auto in_train = [&](std::uint32_t e) {
      return std::binary_search(train_eps.begin(), train_eps.end(), e);
    };
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
      (in_train(ds.samples[i].episode) ? out.train : out.val).push_back(i);
  } else {
    std::vector<std::size_t> idx(ds.samples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = idx.size(); i > 1; --i)
      std::swap(idx[i - 1], idx[rng.next_below(i)]);
    const std::size_t n_train =
        static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * fraction));
    out.train.assign(idx.begin(), idx.begin() + n_train);
    out.val.assign(idx.begin() + n_train, idx.end());
  }
  return out;
}

DatasetStats dataset_stats(const Dataset& ds) {
  if (ds.samples.empty()) throw DomainError("empty dataset");
  DatasetStats st;
  st.count = ds.samples.size();
  double sum = 0.0;
  st.target_min = ds.samples[0].target;
  st.target_max = ds.samples[0].target;
  for (const Sample& s : ds.samples) {
    sum += s.target;
    st.target_min = std::min(st.target_min, static_cast<double>(s.target));
    st.target_max = std::max(st.target_max, static_cast<double>(s.target));
  }
  st.target_mean = sum / static_cast<double>(st.count);
  double var = 0.0;
  for (const Sample& s : ds.samples) {
    const double d = s.target - st.target_mean;
    var += d * d;
  }
  st.target_std = std::sqrt(var / static_cast<double>(st.count));

  const int channels = 2 * ds.levels;
  const std::size_t per_channel = ds.sample_values() / channels;
  st.channel_means.assign(channels, 0.0);
  for (const Sample& s : ds.samples)
    for (std::size_t i = 0; i < s.input.size(); i += channels)
      for (int c = 0; c < channels; ++c) st.channel_means[c] += s.input[i + c];
  for (int c = 0; c < channels; ++c)
    st.channel_means[c] /= static_cast<double>(st.count) * static_cast<double>(per_channel);
  return st;
}

namespace {
constexpr char kDatasetMagic[4] = {'N', 'B', 'V', 'D'};
constexpr std::uint32_t kDatasetVersion = 1;
}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  BinaryWriter w(path);
  w.write_magic(kDatasetMagic);
  w.write<std::uint32_t>(kDatasetVersion);
  w.write<std::uint32_t>(static_cast<std::uint32_t>(ds.dims.x));
  w.write<std::uint32_t>(static_cast<std::uint32_t>(ds.dims.y));
  w.write<std::uint32_t>(static_cast<std::uint32_t>(ds.dims.z));
  w.write<std::uint32_t>(static_cast<std::uint32_t>(ds.levels));
  w.write<std::uint64_t>(ds.samples.size());
  const std::size_t values = ds.sample_values();
  for (const Sample& s : ds.samples) {
    if (s.input.size() != values) throw DomainError("sample size does not match header");
    w.write_array(s.input.data(), s.input.size());
    w.write<float>(s.target);
    w.write<std::uint32_t>(s.episode);
    w.write<std::uint32_t>(s.step);
    w.write<std::uint32_t>(s.neighbor);
  }
  w.close();
}

Dataset load_dataset(const std::string& path) {
  BinaryReader r(path);
  r.expect_magic(kDatasetMagic, "dataset");
  const auto version = r.read<std::uint32_t>();
  if (version != kDatasetVersion)
    throw FormatError(path + ": unsupported dataset version " + std::to_string(version));
  Dataset ds;
  ds.dims.x = static_cast<int>(r.read<std::uint32_t>());
  ds.dims.y = static_cast<int>(r.read<std::uint32_t>());
  ds.dims.z = static_cast<int>(r.read<std::uint32_t>());
  ds.levels = static_cast<int>(r.read<std::uint32_t>());
  if (ds.dims.x < 1 || ds.dims.y < 1 || ds.dims.z < 1 || ds.levels < 1)
    throw FormatError(path + ": invalid dataset header");
  const auto count = r.read<std::uint64_t>();
  const std::size_t values = ds.sample_values();
  ds.samples.resize(count);
  for (Sample& s : ds.samples) {
    s.input.resize(values);
    r.read_array(s.input.data(), values);
    s.target = r.read<float>();
    s.episode = r.read<std::uint32_t>();
    s.step = r.read<std::uint32_t>();
    s.neighbor = r.read<std::uint32_t>();
  }
  if (!r.at_eof()) throw FormatError(path + ": trailing bytes");
  return ds;
}

}  // namespace nbv
