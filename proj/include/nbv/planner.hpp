#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <queue>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nbv/features.hpp"
#include "nbv/geometry.hpp"
#include "nbv/net.hpp"
#include "nbv/occupancy.hpp"
#include "nbv/oracle.hpp"
#include "nbv/rng.hpp"
#include "nbv/scene.hpp"
#include "nbv/sensor.hpp"

namespace nbv {

// Viewpoints are identified by their pose quantized to 1e-6 m / 1e-6 rad, so
// the 2.5 m / 25-degree neighbor lattice forms a consistent graph no matter
// which move sequence reaches a pose. Yaw keys at the 2-pi boundary fold to 0.
struct PoseKey {
  std::int64_t x = 0, y = 0, z = 0, yaw = 0;
  friend auto operator<=>(const PoseKey&, const PoseKey&) = default;
};

PoseKey quantize_pose(const Pose& pose);

struct PoseKeyHash {
  std::size_t operator()(const PoseKey& k) const {
    std::uint64_t h = 0x9E3779B97F4A7C15ull;
    h = mix_u64(h ^ static_cast<std::uint64_t>(k.x));
    h = mix_u64(h ^ static_cast<std::uint64_t>(k.y));
    h = mix_u64(h ^ static_cast<std::uint64_t>(k.z));
    h = mix_u64(h ^ static_cast<std::uint64_t>(k.yaw));
    return static_cast<std::size_t>(h);
  }
};

struct PlannerConfig {
  double step = 2.5;          // meters per translation move
  double yaw_step_deg = 25.0; // degrees per rotation move
  double collision_edge = 1.0;
  int max_start_attempts = 10000;
};

// The 9 moves in fixed order: +/-forward, +/-right, +/-up, yaw +/- step,
// yaw + 180 degrees. Rotation neighbors keep the position.
std::array<Pose, 9> neighbors(const Pose& pose, const PlannerConfig& cfg);

// True iff every voxel overlapping the axis-aligned cube of edge `edge`
// centered at `position` lies in the grid and classifies Free.
bool collision_free(const OccupancyMap& map, const Vec3& position, double edge,
                    const ClassifyThresholds& thresholds);

// Rejection-samples a start: uniform position with the clear box inside the
// grid, yaw from the rotation lattice, accepted when the would-be cleared
// region is ground-truth free and the start plus all 9 neighbors are
// collision-free in the post-clear map. Throws DomainError when
// max_start_attempts is exhausted.
Pose sample_start(const GroundTruthScene& scene, const MapConfig& map_cfg,
                  const PlannerConfig& pcfg, Rng& rng);

// -- utilities ----------------------------------------------------------------

class Utility {
 public:
  virtual ~Utility() = default;
  virtual double score(const OccupancyMap& map, const Pose& pose) = 0;
  // Scores many candidates against one map snapshot; the default parallelizes
  // independent score() calls.
  virtual std::vector<double> score_batch(const OccupancyMap& map,
                                          const std::vector<Pose>& poses);
  // Utilities without the non-increasing-score guarantee opt out of lazy
  // selection; their candidates are rescored (batched) every step.
  virtual bool prefers_exhaustive() const { return false; }
  virtual const char* name() const = 0;
};

class OracleUtility : public Utility {
 public:
  explicit OracleUtility(const OracleContext& ctx) : ctx_(&ctx) {}
  double score(const OccupancyMap& map, const Pose& pose) override;
  const char* name() const override { return "oracle"; }

 private:
  const OracleContext* ctx_;
};

// Count of distinct Unknown-classified voxels the camera's rays traverse in
// the belief map; rays stop at Occupied-classified voxels.
class FrontierUtility : public Utility {
 public:
  FrontierUtility(const CameraModel& camera, const ClassifyThresholds& thresholds)
      : camera_(camera), thresholds_(thresholds) {}
  double score(const OccupancyMap& map, const Pose& pose) override;
  const char* name() const override { return "frontier"; }

 private:
  CameraModel camera_;
  ClassifyThresholds thresholds_;
};

class LearnedUtility : public Utility {
 public:
  // Throws DomainError if the model input does not match the feature config.
  LearnedUtility(const net::Model<float>& model, const FeatureConfig& features);
  double score(const OccupancyMap& map, const Pose& pose) override;
  std::vector<double> score_batch(const OccupancyMap& map,
                                  const std::vector<Pose>& poses) override;
  bool prefers_exhaustive() const override { return true; }
  const char* name() const override { return "learned"; }

 private:
  const net::Model<float>* model_;
  FeatureConfig features_;
};

// Uniform [0,1) score per (map version, viewpoint key), deterministic per seed.
class RandomUtility : public Utility {
 public:
  explicit RandomUtility(std::uint64_t seed) : seed_(seed) {}
  double score(const OccupancyMap& map, const Pose& pose) override;
  bool prefers_exhaustive() const override { return true; }
  const char* name() const override { return "random"; }

 private:
  std::uint64_t seed_;
};

// -- candidate management ------------------------------------------------------

struct SelectionResult {
  bool found = false;
  Pose pose;
  PoseKey key;
  double score = 0.0;
  int evals = 0;
};

// Candidate pool with cached scores. Scores cached at an older map version are
// stale upper bounds; lazy selection pops the max cached entry, re-scoring
// only when the cache is stale, and returns the exact argmax whenever
// re-scoring never increases a score. Exhaustive selection rescores every
// stale eligible candidate (batched) and takes the argmax directly. Both
// modes skip candidates that currently collide without dropping them, and
// break score ties toward the smallest pose key.
class CandidateSet {
 public:
  static constexpr std::uint64_t kNeverScored = ~std::uint64_t{0};

  struct Candidate {
    Pose pose;
    PoseKey key;
    double score = 0.0;
    std::uint64_t score_version = kNeverScored;
    bool active = false;
    std::uint64_t stamp = 0;
  };

  // Adds (or re-activates) the pose's viewpoint, keeping any cached score.
  void insert(const Pose& pose);

  SelectionResult select(Utility& utility, const OccupancyMap& map,
                         const ClassifyThresholds& thresholds, double collision_edge,
                         bool exhaustive);

  int active_count() const { return active_count_; }
  const std::vector<Candidate>& candidates() const { return cands_; }

 private:
  struct HeapEntry {
    double score = 0.0;
    PoseKey key;
    int idx = 0;
    std::uint64_t stamp = 0;
  };
  struct HeapLess {
    bool operator()(const HeapEntry& a, const HeapEntry& b) const {
      if (a.score != b.score) return a.score < b.score;
      return b.key < a.key;
    }
  };

  double cached_or_inf(const Candidate& c) const;
  void deactivate(Candidate& c);

  std::vector<Candidate> cands_;
  std::unordered_map<PoseKey, int, PoseKeyHash> index_;
  std::priority_queue<HeapEntry, std::vector<HeapEntry>, HeapLess> heap_;
  int active_count_ = 0;
};

// -- episodes -------------------------------------------------------------------

enum class SelectionMode { Auto, Lazy, Exhaustive };

struct TraceRow {
  int t = 0;
  Pose pose;
  double chosen_score = 0.0;
  double obs_surf = 0.0;
  int candidate_count = 0;  // active candidates when selection ran
  int evals = 0;            // utility evaluations during selection
};

struct EpisodeTrace {
  std::vector<TraceRow> rows;
  bool terminated_early = false;
};

struct EpisodeRunOptions {
  int t_end = 200;
  SelectionMode mode = SelectionMode::Auto;
  bool use_noise = false;
  NoiseModel noise;  // per-step streams derive from noise.seed and t
  // When set, the run follows this pose sequence instead of selecting
  // (length must equal t_end); used for clean replays of recorded episodes.
  const std::vector<Pose>* replay = nullptr;
};

// Hook for recording per-step training data before selection runs.
class StepObserver {
 public:
  virtual ~StepObserver() = default;
  // `eligible` holds (neighbor index, pose) for the current pose's neighbors
  // that are collision-free and not yet observed twice.
  virtual void on_step(const OccupancyMap& map, int t, const Pose& current,
                       const std::vector<std::pair<int, Pose>>& eligible) = 0;
};

struct EpisodeResult {
  EpisodeTrace trace;
  std::vector<Pose> sequence;  // poses moved to at t = 1..; feeds replays
  std::int64_t total_evals = 0;
  double selection_seconds = 0.0;
  int steps = 0;
};

// Greedy exploration loop: initializes the map with the clear box at the
// start, then per step extends the candidate set with the current pose's
// eligible neighbors, selects the utility argmax, moves (counting the visit),
// measures unless the pose sits inside a ground-truth occupied voxel, and
// integrates. Row 0 records the initial map; early termination on an empty
// candidate set is flagged in the trace.
EpisodeResult run_episode(const GroundTruthScene& scene, const OracleContext& octx,
                          const CameraModel& camera, const MapConfig& map_cfg,
                          const PlannerConfig& pcfg, Utility& utility, const Pose& start,
                          const EpisodeRunOptions& opts, StepObserver* observer = nullptr,
                          OccupancyMap* out_map = nullptr);

void write_trace_csv(const EpisodeTrace& trace, const std::string& path);

}  // namespace nbv
