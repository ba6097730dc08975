#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nbv/config.hpp"
#include "nbv/dataset.hpp"
#include "nbv/errors.hpp"
#include "nbv/eval.hpp"
#include "nbv/io_util.hpp"
#include "nbv/net.hpp"
#include "nbv/oracle.hpp"
#include "nbv/parallel.hpp"
#include "nbv/planner.hpp"
#include "nbv/rng.hpp"
#include "nbv/scene.hpp"

namespace {

using namespace nbv;

// Raised for bad flag combinations and invalid parameter values so that main
// can map them to the usage exit code (2) instead of the domain code (4).
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& m) : std::runtime_error(m) {}
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file; flags override its values");
  cmd->add_option("--seed", c.seed, "Root seed (default: config value)");
}

RunConfig finalize(RunConfig cfg) {
  try {
    apply_derived(cfg);
    validate_config(cfg);
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

RunConfig make_config(const Common& c) {
  RunConfig cfg;
  if (!c.config.empty()) {
    try {
      cfg = load_config(c.config);
    } catch (const DomainError& e) {
      throw UsageError(e.what());
    }
  }
  if (c.seed) cfg.seed = *c.seed;
  return finalize(cfg);
}

// Aligns the feature lattice (and everything derived from it) with a loaded
// model, so exploration works with models trained under a different config.
RunConfig adopt_model_features(RunConfig cfg, const net::Model<float>& model) {
  cfg.features.dims = model.cfg.input_dims;
  cfg.features.levels = model.cfg.feature_levels();
  return finalize(std::move(cfg));
}

std::unique_ptr<Utility> make_utility(const std::string& name, const RunConfig& cfg,
                                      const OracleContext& octx,
                                      const net::Model<float>* model) {
  if (name == "oracle") return std::make_unique<OracleUtility>(octx);
  if (name == "frontier")
    return std::make_unique<FrontierUtility>(cfg.camera, cfg.map.thresholds);
  if (name == "random")
    return std::make_unique<RandomUtility>(substream_seed(cfg.seed, "random"));
  if (name == "learned") {
    if (model == nullptr) throw UsageError("--model is required for the learned utility");
    FeatureConfig f;
    f.dims = model->cfg.input_dims;
    f.levels = model->cfg.feature_levels();
    return std::make_unique<LearnedUtility>(*model, f);
  }
  throw UsageError("unknown utility '" + name + "' (expected oracle|learned|frontier|random)");
}

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t at = 0;
  while (at <= s.size()) {
    const std::size_t comma = s.find(',', at);
    const std::string item = s.substr(at, comma == std::string::npos ? comma : comma - at);
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    at = comma + 1;
  }
  return out;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Next-best-view exploration: scene synthesis, oracle-labeled data generation, "
               "utility-network training, and policy benchmarking"};
  app.require_subcommand(1);

  // gen-scene ---------------------------------------------------------------
  Common gs_common;
  std::vector<double> gs_extent;
  std::optional<double> gs_resolution;
  std::optional<int> gs_buildings;
  std::string gs_out;
  auto* gs = app.add_subcommand("gen-scene", "Generate a procedural city scene");
  add_common(gs, gs_common);
  auto* gs_extent_opt =
      gs->add_option("--extent", gs_extent, "Scene extent in meters (x y z)")->expected(3);
  gs->add_option("--resolution", gs_resolution, "Voxel edge length in meters");
  gs->add_option("--buildings", gs_buildings, "Number of buildings");
  gs->add_option("--out", gs_out, "Output scene file")->required();
  gs->callback([&] {
    RunConfig cfg = make_config(gs_common);
    if (gs_extent_opt->count()) cfg.scene.extent = Vec3{gs_extent[0], gs_extent[1], gs_extent[2]};
    if (gs_resolution) cfg.scene.resolution = *gs_resolution;
    if (gs_buildings) cfg.scene.building_count = *gs_buildings;
    cfg = finalize(std::move(cfg));

    const GroundTruthScene scene = generate_city_scene(cfg.seed, cfg.scene);
    save_scene(scene, gs_out);
    const SurfaceSet surf = surface_set(scene);
    std::cout << "scene " << gs_out << ": dims " << scene.grid.dims.x << "x" << scene.grid.dims.y
              << "x" << scene.grid.dims.z << " voxels=" << scene.grid.voxel_count()
              << " occupied=" << scene.occupied_count() << " surface=" << surf.voxels.size()
              << "\n";
  });

  // gen-data ----------------------------------------------------------------
  Common gd_common;
  std::string gd_scene, gd_out;
  std::optional<int> gd_episodes, gd_steps;
  auto* gd = app.add_subcommand("gen-data", "Record oracle-labeled training samples");
  add_common(gd, gd_common);
  gd->add_option("--scene", gd_scene, "Scene file")->required();
  gd->add_option("--episodes", gd_episodes, "Number of oracle episodes");
  gd->add_option("--steps", gd_steps, "Steps per episode");
  gd->add_option("--out", gd_out, "Output dataset file")->required();
  gd->callback([&] {
    RunConfig cfg = make_config(gd_common);
    if (gd_episodes) cfg.dataset.episodes = *gd_episodes;
    if (gd_steps) cfg.t_end = *gd_steps;
    cfg = finalize(std::move(cfg));

    const GroundTruthScene scene = load_scene(gd_scene);
    const Dataset ds = generate_dataset(scene, cfg.camera, cfg.map, cfg.planner, cfg.features,
                                        cfg.dataset.episodes, cfg.t_end, cfg.seed);
    save_dataset(ds, gd_out);
    const DatasetStats st = dataset_stats(ds);
    std::cout << "dataset " << gd_out << ": samples=" << st.count << " dims=" << ds.dims.x << "x"
              << ds.dims.y << "x" << ds.dims.z << " levels=" << ds.levels
              << " target_mean=" << format_g17(st.target_mean)
              << " target_std=" << format_g17(st.target_std)
              << " target_min=" << format_g17(st.target_min)
              << " target_max=" << format_g17(st.target_max) << "\n";
  });

  // train ---------------------------------------------------------------------
  Common tr_common;
  std::string tr_data, tr_out, tr_loss_csv;
  std::optional<int> tr_epochs, tr_patience;
  std::optional<double> tr_split;
  std::optional<bool> tr_by_episode;
  auto* tr = app.add_subcommand("train", "Train the utility network on a dataset");
  add_common(tr, tr_common);
  tr->add_option("--data", tr_data, "Dataset file")->required();
  tr->add_option("--out", tr_out, "Output model file")->required();
  tr->add_option("--loss-csv", tr_loss_csv, "Per-epoch loss CSV (default: <out>.loss.csv)");
  tr->add_option("--epochs", tr_epochs, "Maximum epochs");
  tr->add_option("--patience", tr_patience, "Early-stopping patience (epochs)");
  tr->add_option("--split-fraction", tr_split, "Training split fraction");
  tr->add_option("--split-by-episode", tr_by_episode,
                 "Split train/val by episode rather than by sample");
  tr->callback([&] {
    RunConfig cfg = make_config(tr_common);
    if (tr_epochs) cfg.train.max_epochs = *tr_epochs;
    if (tr_patience) cfg.train.patience = *tr_patience;
    if (tr_split) cfg.dataset.split_fraction = *tr_split;
    if (tr_by_episode) cfg.dataset.split_by_episode = *tr_by_episode;

    const Dataset ds = load_dataset(tr_data);
    if (ds.samples.empty()) throw DomainError("dataset has no samples");
    cfg.features.dims = ds.dims;
    cfg.features.levels = ds.levels;
    cfg = finalize(std::move(cfg));

    const SplitIndices split =
        split_dataset(ds, cfg.dataset.split_fraction, cfg.seed, cfg.dataset.split_by_episode);
    std::vector<net::SampleRef> train_set, val_set;
    train_set.reserve(split.train.size());
    val_set.reserve(split.val.size());
    for (const std::size_t i : split.train)
      train_set.push_back({ds.samples[i].input.data(), ds.samples[i].target});
    for (const std::size_t i : split.val)
      val_set.push_back({ds.samples[i].input.data(), ds.samples[i].target});

    net::Model<float> model = net::init_model<float>(cfg.net);
    net::TrainOptions topt;
    topt.max_epochs = cfg.train.max_epochs;
    topt.patience = cfg.train.patience;
    const net::TrainReport report = net::train(model, train_set, val_set, topt);
    net::save_model(model, tr_out);

    const std::string loss_path = tr_loss_csv.empty() ? tr_out + ".loss.csv" : tr_loss_csv;
    std::ofstream loss(loss_path);
    if (!loss) throw IoError("cannot open for writing: " + loss_path);
    loss << "epoch,train_loss,val_loss\n";
    for (const net::EpochStat& s : report.curve)
      loss << s.epoch << "," << format_g17(s.train_loss) << "," << format_g17(s.val_loss) << "\n";
    if (!loss) throw IoError("write failed: " + loss_path);

    std::cout << "model " << tr_out << ": params=" << model.theta.size()
              << " train_samples=" << train_set.size() << " val_samples=" << val_set.size()
              << " epochs_run=" << report.epochs_run << " best_epoch=" << report.best_epoch
              << " best_val=" << format_g17(report.best_metric) << "\n";
  });

  // explore -------------------------------------------------------------------
  Common ex_common;
  std::string ex_scene, ex_utility, ex_model, ex_out, ex_map_out;
  std::optional<int> ex_steps;
  std::optional<double> ex_drop, ex_sigma;
  auto* ex = app.add_subcommand("explore", "Run one exploration episode");
  add_common(ex, ex_common);
  ex->add_option("--scene", ex_scene, "Scene file")->required();
  ex->add_option("--utility", ex_utility, "oracle|learned|frontier|random")->required();
  ex->add_option("--model", ex_model, "Model file (required for learned)");
  ex->add_option("--steps", ex_steps, "Episode length");
  ex->add_option("--noise-drop", ex_drop, "Fraction of depth pixels dropped");
  ex->add_option("--noise-sigma", ex_sigma, "Depth noise standard deviation in meters");
  ex->add_option("--out", ex_out, "Output trace CSV")->required();
  ex->add_option("--map-out", ex_map_out, "Optional final map snapshot");
  ex->callback([&] {
    RunConfig cfg = make_config(ex_common);
    if (ex_steps) cfg.t_end = *ex_steps;
    if (ex_drop) cfg.noise.drop_fraction = *ex_drop;
    if (ex_sigma) cfg.noise.sigma = *ex_sigma;
    cfg = finalize(std::move(cfg));

    std::unique_ptr<net::Model<float>> model;
    if (ex_utility == "learned") {
      if (ex_model.empty()) throw UsageError("--model is required for the learned utility");
      model = std::make_unique<net::Model<float>>(net::load_model<float>(ex_model));
      cfg = adopt_model_features(std::move(cfg), *model);
    }

    const GroundTruthScene scene = load_scene(ex_scene);
    const OracleContext octx(scene, cfg.camera);
    const std::unique_ptr<Utility> utility = make_utility(ex_utility, cfg, octx, model.get());

    Rng start_rng = substream(cfg.seed, "start", 0);
    const Pose start = sample_start(scene, cfg.map, cfg.planner, start_rng);

    EpisodeRunOptions opts;
    opts.t_end = cfg.t_end;
    if (cfg.noise.drop_fraction > 0.0 || cfg.noise.sigma > 0.0) {
      opts.use_noise = true;
      opts.noise = cfg.noise;
    }
    OccupancyMap snapshot;
    const EpisodeResult result =
        run_episode(scene, octx, cfg.camera, cfg.map, cfg.planner, *utility, start, opts, nullptr,
                    ex_map_out.empty() ? nullptr : &snapshot);
    write_trace_csv(result.trace, ex_out);
    if (!ex_map_out.empty()) save_map(snapshot, ex_map_out);

    std::cout << "trace " << ex_out << ": utility=" << ex_utility << " steps=" << result.steps
              << " rows=" << result.trace.rows.size()
              << " final_obs_surf=" << format_g17(result.trace.rows.back().obs_surf)
              << " terminated_early=" << (result.trace.terminated_early ? 1 : 0) << "\n";
  });

  // compare -------------------------------------------------------------------
  Common cp_common;
  std::string cp_scene, cp_methods = "oracle,frontier,random", cp_model, cp_outdir;
  std::optional<int> cp_episodes, cp_steps;
  auto* cp = app.add_subcommand("compare", "Benchmark utilities with shared start poses");
  add_common(cp, cp_common);
  cp->add_option("--scene", cp_scene, "Scene file")->required();
  cp->add_option("--methods", cp_methods, "Comma-separated method list (must include oracle)");
  cp->add_option("--model", cp_model, "Model file (required when methods include learned)");
  cp->add_option("--episodes", cp_episodes, "Episodes per method");
  cp->add_option("--steps", cp_steps, "Episode length");
  cp->add_option("--outdir", cp_outdir, "Output directory for CSVs")->required();
  cp->callback([&] {
    RunConfig cfg = make_config(cp_common);
    if (cp_episodes) cfg.benchmark.episodes = *cp_episodes;
    if (cp_steps) cfg.benchmark.t_end = *cp_steps;
    cfg = finalize(std::move(cfg));

    const std::vector<std::string> names = split_csv_list(cp_methods);
    if (names.empty()) throw UsageError("--methods is empty");
    for (std::size_t i = 0; i < names.size(); ++i)
      for (std::size_t j = i + 1; j < names.size(); ++j)
        if (names[i] == names[j]) throw UsageError("duplicate method '" + names[i] + "'");
    if (std::find(names.begin(), names.end(), "oracle") == names.end())
      throw UsageError("--methods must include 'oracle' (it anchors normalization)");

    std::unique_ptr<net::Model<float>> model;
    if (std::find(names.begin(), names.end(), "learned") != names.end()) {
      if (cp_model.empty()) throw UsageError("--model is required when methods include learned");
      model = std::make_unique<net::Model<float>>(net::load_model<float>(cp_model));
      cfg = adopt_model_features(std::move(cfg), *model);
    }

    const GroundTruthScene scene = load_scene(cp_scene);
    const OracleContext octx(scene, cfg.camera);
    std::vector<std::unique_ptr<Utility>> owned;
    std::vector<MethodSpec> methods;
    for (const std::string& name : names) {
      owned.push_back(make_utility(name, cfg, octx, model.get()));
      methods.push_back({name, owned.back().get()});
    }

    BenchmarkConfig bc;
    bc.episodes = cfg.benchmark.episodes;
    bc.t_end = cfg.benchmark.t_end;
    bc.seed = cfg.seed;
    bc.probe_episodes = cfg.benchmark.probe_episodes;
    bc.probe_t_end = cfg.benchmark.probe_t_end;
    const BenchmarkReport report =
        run_benchmark(scene, octx, cfg.camera, cfg.map, cfg.planner, methods, bc);

    std::filesystem::create_directories(cp_outdir);
    write_benchmark_csvs(report, cp_outdir);

    std::cout << "benchmark " << cp_outdir << ": episodes=" << bc.episodes
              << " t_end=" << report.t_end << " shared_starts=" << report.starts.size() << "\n";
    for (const MethodResult& m : report.methods)
      std::cout << "method=" << m.name << " eff_mean=" << format_g17(m.eff_mean)
                << " eff_std=" << format_g17(m.eff_std)
                << " eff_normalized=" << format_g17(m.eff_normalized)
                << " evals_per_step=" << format_g17(m.evals_per_step)
                << " spearman=" << (m.spearman_defined ? format_g17(m.spearman) : "nan") << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  nbv::configure_threads();
  try {
    return run_cli(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nbv::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const nbv::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const nbv::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
