#include "nbv/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "nbv/errors.hpp"
#include "nbv/io_util.hpp"

namespace nbv {

namespace {

std::vector<double> extended_curve(const EpisodeTrace& trace, int t_end, bool allow_extend) {
  if (trace.rows.empty()) throw DomainError("empty trace");
  if (static_cast<int>(trace.rows.size()) < t_end + 1 && !allow_extend)
    throw DomainError("trace does not cover t_end");
  std::vector<double> curve(static_cast<std::size_t>(t_end) + 1);
  for (int t = 0; t <= t_end; ++t) {
    const std::size_t i = std::min<std::size_t>(t, trace.rows.size() - 1);
    curve[t] = trace.rows[i].obs_surf;
  }
  return curve;
}

double curve_sum(const std::vector<double>& curve) {
  double s = 0.0;
  for (double v : curve) s += v;
  return s;
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double efficiency(const EpisodeTrace& trace, int t_end) {
  if (t_end < 0) throw DomainError("t_end must be >= 0");
  return curve_sum(extended_curve(trace, t_end, trace.terminated_early));
}

double spearman_rho(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DomainError("spearman: length mismatch");
  if (a.size() < 2) throw DomainError("spearman: need at least two pairs");
  const std::vector<double> ra = average_ranks(a);
  const std::vector<double> rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double va = 0.0, vb = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - ma;
    const double db = rb[i] - mb;
    va += da * da;
    vb += db * db;
    cov += da * db;
  }
  if (va == 0.0 || vb == 0.0) throw DomainError("spearman: zero rank variance");
  return cov / std::sqrt(va * vb);
}

namespace {

struct EpisodeSlot {
  std::vector<double> curve;
  double eff = 0.0;
  double selection_seconds = 0.0;
  std::int64_t evals = 0;
  int steps = 0;
};

struct ProbeRows {
  std::vector<double> oracle;
  std::vector<std::vector<double>> per_method;  // [method][pair]
};

class ProbeObserver : public StepObserver {
 public:
  ProbeObserver(const OracleContext& octx, const std::vector<MethodSpec>& methods,
                ProbeRows& out)
      : octx_(&octx), methods_(&methods), out_(&out) {
    out_->per_method.resize(methods.size());
  }

  void on_step(const OccupancyMap& map, int, const Pose&,
               const std::vector<std::pair<int, Pose>>& eligible) override {
    for (const auto& [idx, pose] : eligible) {
      (void)idx;
      out_->oracle.push_back(oracle_score(map, pose, *octx_));
      for (std::size_t m = 0; m < methods_->size(); ++m)
        out_->per_method[m].push_back((*methods_)[m].utility->score(map, pose));
    }
  }

 private:
  const OracleContext* octx_;
  const std::vector<MethodSpec>* methods_;
  ProbeRows* out_;
};

}  // namespace

BenchmarkReport run_benchmark(const GroundTruthScene& scene, const OracleContext& octx,
                              const CameraModel& camera, const MapConfig& map_cfg,
                              const PlannerConfig& pcfg, const std::vector<MethodSpec>& methods,
                              const BenchmarkConfig& cfg) {
  if (cfg.episodes < 1) throw DomainError("episodes must be >= 1");
  if (methods.empty()) throw DomainError("no methods given");
  int oracle_idx = -1;
  for (std::size_t m = 0; m < methods.size(); ++m)
    if (methods[m].name == "oracle") oracle_idx = static_cast<int>(m);
  if (oracle_idx < 0) throw DomainError("benchmark requires the oracle method");

  BenchmarkReport report;
  report.t_end = cfg.t_end;
  report.starts.reserve(cfg.episodes);
  for (int e = 0; e < cfg.episodes; ++e) {
    Rng rng(substream(cfg.seed, "start", static_cast<std::uint64_t>(e)));
    report.starts.push_back(sample_start(scene, map_cfg, pcfg, rng));
  }

  const int n_methods = static_cast<int>(methods.size());
  std::vector<std::vector<EpisodeSlot>> slots(n_methods);
  for (auto& s : slots) s.resize(cfg.episodes);
  std::vector<std::string> failures(static_cast<std::size_t>(n_methods) * cfg.episodes);

  const std::int64_t total = static_cast<std::int64_t>(n_methods) * cfg.episodes;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t k = 0; k < total; ++k) {
    const int m = static_cast<int>(k / cfg.episodes);
    const int e = static_cast<int>(k % cfg.episodes);
    try {
      EpisodeRunOptions opts;
      opts.t_end = cfg.t_end;
      const EpisodeResult res = run_episode(scene, octx, camera, map_cfg, pcfg,
                                            *methods[m].utility, report.starts[e], opts);
      EpisodeSlot& slot = slots[m][e];
      slot.curve = extended_curve(res.trace, cfg.t_end, res.trace.terminated_early);
      slot.eff = curve_sum(slot.curve);
      slot.selection_seconds = res.selection_seconds;
      slot.evals = res.total_evals;
      slot.steps = res.steps;
    } catch (const std::exception& ex) {
      failures[k] = ex.what();
    }
  }
  for (std::int64_t k = 0; k < total; ++k)
    if (!failures[k].empty())
      throw DomainError("benchmark episode failed: " + failures[k]);

  // Rank-correlation probes: oracle-driven states, every method scored on the
  // same (map, pose) pairs.
  ProbeRows probes;
  probes.per_method.resize(methods.size());
  const int probe_t = cfg.probe_t_end > 0 ? cfg.probe_t_end : cfg.t_end;
  std::vector<ProbeRows> probe_shards(std::max(0, cfg.probe_episodes));
  std::vector<std::string> probe_failures(std::max(0, cfg.probe_episodes));
#pragma omp parallel for schedule(dynamic)
  for (int e = 0; e < cfg.probe_episodes; ++e) {
    try {
      Rng rng(substream(cfg.seed, "probe", static_cast<std::uint64_t>(e)));
      const Pose start = sample_start(scene, map_cfg, pcfg, rng);
      OracleUtility oracle(octx);
      ProbeObserver observer(octx, methods, probe_shards[e]);
      EpisodeRunOptions opts;
      opts.t_end = probe_t;
      run_episode(scene, octx, camera, map_cfg, pcfg, oracle, start, opts, &observer);
    } catch (const std::exception& ex) {
      probe_failures[e] = ex.what();
    }
  }
  for (int e = 0; e < cfg.probe_episodes; ++e) {
    if (!probe_failures[e].empty())
      throw DomainError("probe episode failed: " + probe_failures[e]);
    ProbeRows& shard = probe_shards[e];
    probes.oracle.insert(probes.oracle.end(), shard.oracle.begin(), shard.oracle.end());
    for (std::size_t m = 0; m < methods.size(); ++m)
      probes.per_method[m].insert(probes.per_method[m].end(), shard.per_method[m].begin(),
                                  shard.per_method[m].end());
  }

  double oracle_mean = 0.0;
  report.methods.resize(methods.size());
  for (int m = 0; m < n_methods; ++m) {
    MethodResult& out = report.methods[m];
    out.name = methods[m].name;
    double sum = 0.0, sum_seconds = 0.0;
    std::int64_t sum_evals = 0, sum_steps = 0;
    for (int e = 0; e < cfg.episodes; ++e) {
      EpisodeSlot& slot = slots[m][e];
      out.curves.push_back(std::move(slot.curve));
      out.efficiency.push_back(slot.eff);
      sum += slot.eff;
      sum_seconds += slot.selection_seconds;
      sum_evals += slot.evals;
      sum_steps += slot.steps;
    }
    out.eff_mean = sum / cfg.episodes;
    double var = 0.0;
    for (double v : out.efficiency) {
      const double d = v - out.eff_mean;
      var += d * d;
    }
    out.eff_std = cfg.episodes > 1 ? std::sqrt(var / (cfg.episodes - 1)) : 0.0;
    out.s_per_step = sum_steps > 0 ? sum_seconds / static_cast<double>(sum_steps) : 0.0;
    out.evals_per_step =
        sum_steps > 0 ? static_cast<double>(sum_evals) / static_cast<double>(sum_steps) : 0.0;
    if (m == oracle_idx) oracle_mean = out.eff_mean;

    out.spearman_pairs = static_cast<std::int64_t>(probes.per_method[m].size());
    if (out.spearman_pairs >= 2) {
      try {
        out.spearman = spearman_rho(probes.per_method[m], probes.oracle);
        out.spearman_defined = true;
      } catch (const DomainError&) {
        out.spearman_defined = false;
      }
    }
  }
  if (!(oracle_mean > 0.0)) throw DomainError("oracle efficiency is zero; degenerate setup");
  for (MethodResult& out : report.methods) out.eff_normalized = out.eff_mean / oracle_mean;
  return report;
}

void write_benchmark_csvs(const BenchmarkReport& report, const std::string& outdir) {
  {
    std::ofstream out(outdir + "/curves.csv");
    if (!out) throw IoError("cannot open for writing: " + outdir + "/curves.csv");
    out << "method,episode,t,obs_surf\n";
    for (const MethodResult& m : report.methods)
      for (std::size_t e = 0; e < m.curves.size(); ++e)
        for (int t = 0; t <= report.t_end; ++t)
          out << m.name << ',' << e << ',' << t << ',' << format_g17(m.curves[e][t]) << '\n';
    if (!out) throw IoError("write failed: " + outdir + "/curves.csv");
  }
  {
    std::ofstream out(outdir + "/summary.csv");
    if (!out) throw IoError("cannot open for writing: " + outdir + "/summary.csv");
    out << "method,eff_mean,eff_std,eff_normalized,s_per_step,evals_per_step\n";
    for (const MethodResult& m : report.methods)
      out << m.name << ',' << format_g17(m.eff_mean) << ',' << format_g17(m.eff_std) << ','
          << format_g17(m.eff_normalized) << ',' << format_g17(m.s_per_step) << ','
          << format_g17(m.evals_per_step) << '\n';
    if (!out) throw IoError("write failed: " + outdir + "/summary.csv");
  }
  {
    std::ofstream out(outdir + "/spearman.csv");
    if (!out) throw IoError("cannot open for writing: " + outdir + "/spearman.csv");
    out << "method,spearman_rho,num_pairs\n";
    for (const MethodResult& m : report.methods) {
      out << m.name << ',';
      if (m.spearman_defined)
        out << format_g17(m.spearman);
      else
        out << "nan";
      out << ',' << m.spearman_pairs << '\n';
    }
    if (!out) throw IoError("write failed: " + outdir + "/spearman.csv");
  }
}

NoiseReplayReport noise_replay(const GroundTruthScene& scene, const OracleContext& octx,
                               const CameraModel& camera, const MapConfig& map_cfg,
                               const PlannerConfig& pcfg, Utility& utility,
                               const NoiseReplayConfig& cfg) {
  if (cfg.episodes < 1) throw DomainError("episodes must be >= 1");
  if (cfg.grid.empty()) throw DomainError("empty noise grid");

  NoiseReplayReport report;
  report.entries.resize(cfg.grid.size());
  for (std::size_t g = 0; g < cfg.grid.size(); ++g) {
    report.entries[g].drop_fraction = cfg.grid[g].drop_fraction;
    report.entries[g].sigma = cfg.grid[g].sigma;
    report.entries[g].normalized.assign(cfg.episodes, 0.0);
  }
  std::vector<std::string> failures(cfg.episodes);

#pragma omp parallel for schedule(dynamic)
  for (int e = 0; e < cfg.episodes; ++e) {
    try {
      Rng rng(substream(cfg.seed, "start", static_cast<std::uint64_t>(e)));
      const Pose start = sample_start(scene, map_cfg, pcfg, rng);

      EpisodeRunOptions clean_opts;
      clean_opts.t_end = cfg.t_end;
      const EpisodeResult clean =
          run_episode(scene, octx, camera, map_cfg, pcfg, utility, start, clean_opts);
      const double eff_clean =
          curve_sum(extended_curve(clean.trace, cfg.t_end, clean.trace.terminated_early));
      if (!(eff_clean > 0.0)) throw DomainError("noise-free run observed nothing");

      const std::uint64_t episode_noise_seed =
          substream_seed(cfg.seed, "noise", static_cast<std::uint64_t>(e));
      for (std::size_t g = 0; g < cfg.grid.size(); ++g) {
        EpisodeRunOptions noisy_opts;
        noisy_opts.t_end = cfg.t_end;
        noisy_opts.use_noise = true;
        noisy_opts.noise = cfg.grid[g];
        noisy_opts.noise.seed = substream_seed(episode_noise_seed, "grid", g);
        const EpisodeResult noisy =
            run_episode(scene, octx, camera, map_cfg, pcfg, utility, start, noisy_opts);

        EpisodeRunOptions replay_opts;
        replay_opts.t_end = noisy.steps;
        replay_opts.replay = &noisy.sequence;
        EpisodeResult replay =
            run_episode(scene, octx, camera, map_cfg, pcfg, utility, start, replay_opts);
        replay.trace.terminated_early = noisy.trace.terminated_early;
        const double eff_replay = curve_sum(extended_curve(
            replay.trace, cfg.t_end, replay.trace.terminated_early));
        report.entries[g].normalized[e] = eff_replay / eff_clean;
      }
    } catch (const std::exception& ex) {
      failures[e] = ex.what();
    }
  }
  for (int e = 0; e < cfg.episodes; ++e)
    if (!failures[e].empty()) throw DomainError("noise episode failed: " + failures[e]);

  for (NoiseReplayEntry& entry : report.entries) {
    double sum = 0.0;
    for (double v : entry.normalized) sum += v;
    entry.normalized_mean = sum / static_cast<double>(entry.normalized.size());
  }
  return report;
}

}  // namespace nbv
