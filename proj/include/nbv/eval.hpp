#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nbv/oracle.hpp"
#include "nbv/planner.hpp"

namespace nbv {

// Area under the discovery curve: sum of ObsSurf over t = 0..t_end. Traces
// that terminated early extend flat; otherwise the trace must cover every t.
double efficiency(const EpisodeTrace& trace, int t_end);

// Rank correlation with average ranks for ties. Throws on length mismatch,
// fewer than two pairs, or zero rank variance.
double spearman_rho(const std::vector<double>& a, const std::vector<double>& b);

struct MethodSpec {
  std::string name;
  Utility* utility = nullptr;
};

struct BenchmarkConfig {
  int episodes = 20;
  int t_end = 40;
  std::uint64_t seed = 1;
  int probe_episodes = 3;  // oracle-driven episodes feeding rank correlation
  int probe_t_end = 0;     // 0: reuse t_end
};

struct MethodResult {
  std::string name;
  std::vector<std::vector<double>> curves;  // [episode][t], flat-extended
  std::vector<double> efficiency;
  double eff_mean = 0.0, eff_std = 0.0, eff_normalized = 0.0;
  double s_per_step = 0.0;
  double evals_per_step = 0.0;
  double spearman = 0.0;
  std::int64_t spearman_pairs = 0;
  bool spearman_defined = false;
};

struct BenchmarkReport {
  std::vector<MethodResult> methods;
  std::vector<Pose> starts;
  int t_end = 0;
};

// Runs every method over the same pre-drawn start poses (episodes in
// parallel, deterministically merged), normalizes efficiency by the method
// named "oracle" (required), and correlates each method's utility with the
// oracle's over states visited by oracle-driven probe episodes.
BenchmarkReport run_benchmark(const GroundTruthScene& scene, const OracleContext& octx,
                              const CameraModel& camera, const MapConfig& map_cfg,
                              const PlannerConfig& pcfg, const std::vector<MethodSpec>& methods,
                              const BenchmarkConfig& cfg);

// curves.csv, summary.csv, spearman.csv under `outdir`.
void write_benchmark_csvs(const BenchmarkReport& report, const std::string& outdir);

struct NoiseReplayConfig {
  int episodes = 10;
  int t_end = 40;
  std::uint64_t seed = 1;
  std::vector<NoiseModel> grid;  // per-entry seeds are derived internally
};

struct NoiseReplayEntry {
  double drop_fraction = 0.0;
  double sigma = 0.0;
  std::vector<double> normalized;  // per episode
  double normalized_mean = 0.0;
};

struct NoiseReplayReport {
  std::vector<NoiseReplayEntry> entries;
};

// For each episode and noise level: drive the policy on noisy depth, then
// replay the recorded pose sequence with clean depth and score that map.
// Reported values are replay efficiency over the efficiency of the same
// policy driven without noise from the same start.
NoiseReplayReport noise_replay(const GroundTruthScene& scene, const OracleContext& octx,
                               const CameraModel& camera, const MapConfig& map_cfg,
                               const PlannerConfig& pcfg, Utility& utility,
                               const NoiseReplayConfig& cfg);

}  // namespace nbv
