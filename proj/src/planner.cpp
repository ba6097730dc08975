#include "nbv/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "nbv/errors.hpp"
#include "nbv/io_util.hpp"
#include "nbv/raycast.hpp"

namespace nbv {

namespace {
constexpr double kKeyQuantum = 1e6;  // keys are llround(value * 1e6)
// llround(2*pi * 1e6); a yaw quantizing here is within 1e-6 of 2*pi.
constexpr std::int64_t kYawKeyWrap = 6283185;
}  // namespace

PoseKey quantize_pose(const Pose& pose) {
  PoseKey k;
  k.x = std::llround(pose.position.x * kKeyQuantum);
  k.y = std::llround(pose.position.y * kKeyQuantum);
  k.z = std::llround(pose.position.z * kKeyQuantum);
  k.yaw = std::llround(wrap_angle(pose.yaw) * kKeyQuantum);
  if (k.yaw >= kYawKeyWrap) k.yaw = 0;
  return k;
}

std::array<Pose, 9> neighbors(const Pose& pose, const PlannerConfig& cfg) {
  const Vec3 fwd = pose.forward();
  const Vec3 right = pose.right();
  const Vec3 up = pose.up();
  const double s = cfg.step;
  const double dyaw = cfg.yaw_step_deg * M_PI / 180.0;
  auto moved = [&](const Vec3& d) { return Pose{pose.position + d * s, pose.yaw}; };
  auto turned = [&](double a) { return Pose{pose.position, wrap_angle(pose.yaw + a)}; };
  return {moved(fwd),          moved(fwd * -1.0),  moved(right),
          moved(right * -1.0), moved(up),          moved(up * -1.0),
          turned(dyaw),        turned(-dyaw),      turned(M_PI)};
}

bool collision_free(const OccupancyMap& map, const Vec3& position, double edge,
                    const ClassifyThresholds& thresholds) {
  const GridGeometry& g = map.grid();
  const double h = edge / 2.0;
  Vec3i lo, hi;
  for (int i = 0; i < 3; ++i) {
    const double a = (position[i] - h - g.origin[i]) / g.resolution;
    const double b = (position[i] + h - g.origin[i]) / g.resolution;
    const int ilo = static_cast<int>(std::floor(a));
    const int ihi = static_cast<int>(std::ceil(b)) - 1;
    if (ilo < 0 || ihi >= g.dims[i]) return false;
    lo[i] = ilo;
    hi[i] = ihi;
  }
  for (int z = lo.z; z <= hi.z; ++z)
    for (int y = lo.y; y <= hi.y; ++y)
      for (int x = lo.x; x <= hi.x; ++x) {
        const std::int64_t idx = g.linear_index(x, y, z);
        if (classify_values(map.occ(idx), map.unc(idx), thresholds) != VoxelClass::Free)
          return false;
      }
  return true;
}

namespace {

// Matches clear_box's center-inclusion rule voxel for voxel.
bool center_in_box(const GridGeometry& g, int axis, int idx, double center, double h) {
  const double c = g.origin[axis] + (idx + 0.5) * g.resolution;
  return c >= center - h && c < center + h;
}

bool box_voxels_cleared_and_free(const GroundTruthScene& scene, const Vec3& clear_center,
                                 double clear_h) {
  const GridGeometry& g = scene.grid;
  for (int z = 0; z < g.dims.z; ++z) {
    if (!center_in_box(g, 2, z, clear_center.z, clear_h)) continue;
    for (int y = 0; y < g.dims.y; ++y) {
      if (!center_in_box(g, 1, y, clear_center.y, clear_h)) continue;
      for (int x = 0; x < g.dims.x; ++x) {
        if (!center_in_box(g, 0, x, clear_center.x, clear_h)) continue;
        if (scene.occupied_at({x, y, z})) return false;
      }
    }
  }
  return true;
}

// Collision box of `position` lies in-grid with every voxel inside the
// would-be cleared region (equivalent to collision_free on the post-clear map).
bool box_inside_cleared(const GridGeometry& g, const Vec3& position, double edge,
                        const Vec3& clear_center, double clear_h) {
  const double h = edge / 2.0;
  Vec3i lo, hi;
  for (int i = 0; i < 3; ++i) {
    const double a = (position[i] - h - g.origin[i]) / g.resolution;
    const double b = (position[i] + h - g.origin[i]) / g.resolution;
    const int ilo = static_cast<int>(std::floor(a));
    const int ihi = static_cast<int>(std::ceil(b)) - 1;
    if (ilo < 0 || ihi >= g.dims[i]) return false;
    lo[i] = ilo;
    hi[i] = ihi;
  }
  for (int z = lo.z; z <= hi.z; ++z)
    for (int y = lo.y; y <= hi.y; ++y)
      for (int x = lo.x; x <= hi.x; ++x) {
        if (!center_in_box(g, 0, x, clear_center.x, clear_h) ||
            !center_in_box(g, 1, y, clear_center.y, clear_h) ||
            !center_in_box(g, 2, z, clear_center.z, clear_h))
          return false;
      }
  return true;
}

}  // namespace

Pose sample_start(const GroundTruthScene& scene, const MapConfig& map_cfg,
                  const PlannerConfig& pcfg, Rng& rng) {
  const GridGeometry& g = scene.grid;
  const double h = map_cfg.clear_extent / 2.0;
  Vec3 lo, hi;
  for (int i = 0; i < 3; ++i) {
    lo[i] = g.origin[i] + h;
    hi[i] = g.max_corner()[i] - h;
    if (lo[i] > hi[i]) throw DomainError("grid too small for the initial clear box");
  }
  const double yaw_step = pcfg.yaw_step_deg * M_PI / 180.0;
  const int yaw_slots = std::max(1, static_cast<int>(std::floor(360.0 / pcfg.yaw_step_deg)));

  for (int attempt = 0; attempt < pcfg.max_start_attempts; ++attempt) {
    Pose pose;
    pose.position.x = rng.uniform(lo.x, hi.x);
    pose.position.y = rng.uniform(lo.y, hi.y);
    pose.position.z = rng.uniform(lo.z, hi.z);
    pose.yaw = wrap_angle(static_cast<double>(rng.uniform_int(0, yaw_slots - 1)) * yaw_step);

    if (!box_voxels_cleared_and_free(scene, pose.position, h)) continue;
    bool ok = box_inside_cleared(g, pose.position, pcfg.collision_edge, pose.position, h);
    if (ok)
      for (const Pose& n : neighbors(pose, pcfg)) {
        if (!box_inside_cleared(g, n.position, pcfg.collision_edge, pose.position, h)) {
          ok = false;
          break;
        }
      }
    if (ok) return pose;
  }
  throw DomainError("no collision-free start pose found");
}

// -- utilities ----------------------------------------------------------------

std::vector<double> Utility::score_batch(const OccupancyMap& map,
                                         const std::vector<Pose>& poses) {
  std::vector<double> out(poses.size());
  const std::int64_t n = static_cast<std::int64_t>(poses.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) out[i] = score(map, poses[i]);
  return out;
}

double OracleUtility::score(const OccupancyMap& map, const Pose& pose) {
  return oracle_score(map, pose, *ctx_);
}

double FrontierUtility::score(const OccupancyMap& map, const Pose& pose) {
  thread_local std::vector<std::uint64_t> stamp;
  thread_local std::uint64_t stamp_cur = 0;
  const GridGeometry& g = map.grid();
  if (stamp.size() != static_cast<std::size_t>(g.voxel_count())) {
    stamp.assign(static_cast<std::size_t>(g.voxel_count()), 0);
    stamp_cur = 0;
  }
  ++stamp_cur;

  std::int64_t count = 0;
  for (int j = 0; j < camera_.height; ++j)
    for (int i = 0; i < camera_.width; ++i) {
      const Vec3 dir = camera_.pixel_ray(pose, i, j);
      walk_voxels(g, pose.position, dir, camera_.max_range,
                  [&](const Vec3i& v, double, double) {
                    const std::int64_t idx = g.linear_index(v);
                    const VoxelClass c =
                        classify_values(map.occ(idx), map.unc(idx), thresholds_);
                    if (c == VoxelClass::Occupied) return false;
                    if (c == VoxelClass::Unknown && stamp[idx] != stamp_cur) {
                      stamp[idx] = stamp_cur;
                      ++count;
                    }
                    return true;
                  });
    }
  return static_cast<double>(count);
}

LearnedUtility::LearnedUtility(const net::Model<float>& model, const FeatureConfig& features)
    : model_(&model), features_(features) {
  if (model.cfg.input_dims != features.dims ||
      model.cfg.input_channels != 2 * features.levels)
    throw DomainError("network input does not match the feature configuration");
}

double LearnedUtility::score(const OccupancyMap& map, const Pose& pose) {
  const MultiScaleSample sample = extract(map, pose, features_);
  net::BatchWork<float> work;
  return net::predict_utility(*model_, sample.values.data(), work);
}

std::vector<double> LearnedUtility::score_batch(const OccupancyMap& map,
                                                const std::vector<Pose>& poses) {
  const std::vector<MultiScaleSample> samples = extract_batch(map, poses, features_);
  std::vector<double> out(poses.size());
  net::BatchWork<float> work;
  std::vector<const float*> xs;
  constexpr std::size_t kChunk = 32;  // bounds activation memory
  for (std::size_t at = 0; at < samples.size(); at += kChunk) {
    const std::size_t n = std::min(kChunk, samples.size() - at);
    xs.resize(n);
    for (std::size_t i = 0; i < n; ++i) xs[i] = samples[at + i].values.data();
    net::predict_batch(*model_, xs.data(), static_cast<int>(n), work);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = static_cast<double>(work.pred[i]) * model_->cfg.target_std +
                       model_->cfg.target_mean;
      out[at + i] = v > 0.0 ? v : 0.0;
    }
  }
  return out;
}

double RandomUtility::score(const OccupancyMap& map, const Pose& pose) {
  const PoseKey k = quantize_pose(pose);
  std::uint64_t h = mix_u64(seed_ ^ 0x72616E646F6D7574ull);
  h = mix_u64(h ^ map.version());
  h = mix_u64(h ^ static_cast<std::uint64_t>(k.x));
  h = mix_u64(h ^ static_cast<std::uint64_t>(k.y));
  h = mix_u64(h ^ static_cast<std::uint64_t>(k.z));
  h = mix_u64(h ^ static_cast<std::uint64_t>(k.yaw));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// -- candidate set --------------------------------------------------------------

double CandidateSet::cached_or_inf(const Candidate& c) const {
  return c.score_version == kNeverScored ? std::numeric_limits<double>::infinity() : c.score;
}

void CandidateSet::deactivate(Candidate& c) {
  c.active = false;
  ++c.stamp;
  --active_count_;
}

void CandidateSet::insert(const Pose& pose) {
  const PoseKey key = quantize_pose(pose);
  auto [it, created] = index_.try_emplace(key, static_cast<int>(cands_.size()));
  if (created) {
    Candidate c;
    c.pose = pose;
    c.key = key;
    cands_.push_back(c);
  }
  Candidate& c = cands_[it->second];
  if (c.active) return;
  c.active = true;
  ++c.stamp;
  ++active_count_;
  heap_.push({cached_or_inf(c), c.key, it->second, c.stamp});
}

SelectionResult CandidateSet::select(Utility& utility, const OccupancyMap& map,
                                     const ClassifyThresholds& thresholds,
                                     double collision_edge, bool exhaustive) {
  SelectionResult res;
  if (exhaustive) {
    std::vector<int> eligible;
    std::vector<int> stale;
    for (int idx = 0; idx < static_cast<int>(cands_.size()); ++idx) {
      const Candidate& c = cands_[idx];
      if (!c.active) continue;
      if (!collision_free(map, c.pose.position, collision_edge, thresholds)) continue;
      eligible.push_back(idx);
      if (c.score_version != map.version()) stale.push_back(idx);
    }
    if (!stale.empty()) {
      std::vector<Pose> poses;
      poses.reserve(stale.size());
      for (int idx : stale) poses.push_back(cands_[idx].pose);
      const std::vector<double> scores = utility.score_batch(map, poses);
      for (std::size_t i = 0; i < stale.size(); ++i) {
        Candidate& c = cands_[stale[i]];
        c.score = scores[i];
        c.score_version = map.version();
        ++c.stamp;
        heap_.push({c.score, c.key, stale[i], c.stamp});
      }
      res.evals = static_cast<int>(stale.size());
    }
    int best = -1;
    for (int idx : eligible) {
      const Candidate& c = cands_[idx];
      if (best < 0 || c.score > cands_[best].score ||
          (c.score == cands_[best].score && c.key < cands_[best].key))
        best = idx;
    }
    if (best >= 0) {
      Candidate& c = cands_[best];
      res.found = true;
      res.pose = c.pose;
      res.key = c.key;
      res.score = c.score;
      deactivate(c);
    }
    return res;
  }

  std::vector<HeapEntry> deferred;  // colliding right now; keep for later steps
  while (!heap_.empty()) {
    const HeapEntry e = heap_.top();
    heap_.pop();
    Candidate& c = cands_[e.idx];
    if (e.stamp != c.stamp || !c.active) continue;
    if (!collision_free(map, c.pose.position, collision_edge, thresholds)) {
      deferred.push_back(e);
      continue;
    }
    if (c.score_version == map.version()) {
      res.found = true;
      res.pose = c.pose;
      res.key = c.key;
      res.score = c.score;
      deactivate(c);
      break;
    }
    c.score = utility.score(map, c.pose);
    c.score_version = map.version();
    ++res.evals;
    ++c.stamp;
    heap_.push({c.score, c.key, e.idx, c.stamp});
  }
  for (const HeapEntry& e : deferred) heap_.push(e);
  return res;
}

// -- episode loop ----------------------------------------------------------------

namespace {

void measure_and_integrate(OccupancyMap& map, const GroundTruthScene& scene,
                           const CameraModel& camera, const Pose& pose,
                           const EpisodeRunOptions& opts, int t) {
  const Vec3& p = pose.position;
  if (scene.grid.contains_point(p) && scene.occupied_at(scene.grid.voxel_of(p)))
    return;  // inside a wall: the visit counts but no measurement is taken
  DepthImage img = render_depth(scene, pose, camera);
  if (opts.use_noise) {
    NoiseModel nm = opts.noise;
    nm.seed = substream_seed(opts.noise.seed, "step", static_cast<std::uint64_t>(t));
    img = apply_noise(img, nm, camera.max_range);
  }
  map.integrate_measurement(pose, img, camera);
}

}  // namespace

EpisodeResult run_episode(const GroundTruthScene& scene, const OracleContext& octx,
                          const CameraModel& camera, const MapConfig& map_cfg,
                          const PlannerConfig& pcfg, Utility& utility, const Pose& start,
                          const EpisodeRunOptions& opts, StepObserver* observer,
                          OccupancyMap* out_map) {
  if (opts.t_end < 0) throw DomainError("t_end must be >= 0");
  if (opts.replay && static_cast<int>(opts.replay->size()) != opts.t_end)
    throw DomainError("replay sequence length does not match t_end");

  OccupancyMap map = init_map(scene.grid, map_cfg, start.position);
  EpisodeResult res;
  Pose current = start;
  res.trace.rows.push_back({0, current, 0.0, obs_surf(map, octx), 0, 0});

  if (opts.replay) {
    for (int t = 1; t <= opts.t_end; ++t) {
      current = (*opts.replay)[t - 1];
      measure_and_integrate(map, scene, camera, current, opts, t);
      res.trace.rows.push_back({t, current, 0.0, obs_surf(map, octx), 0, 0});
      res.sequence.push_back(current);
      ++res.steps;
    }
    if (out_map) *out_map = std::move(map);
    return res;
  }

  const bool exhaustive = opts.mode == SelectionMode::Exhaustive ||
                          (opts.mode == SelectionMode::Auto && utility.prefers_exhaustive());
  CandidateSet cands;
  std::unordered_map<PoseKey, int, PoseKeyHash> visits;
  visits[quantize_pose(current)] = 1;

  std::vector<std::pair<int, Pose>> eligible;
  for (int t = 1; t <= opts.t_end; ++t) {
    eligible.clear();
    const std::array<Pose, 9> nb = neighbors(current, pcfg);
    for (int i = 0; i < 9; ++i) {
      const auto it = visits.find(quantize_pose(nb[i]));
      if (it != visits.end() && it->second >= 2) continue;
      if (!collision_free(map, nb[i].position, pcfg.collision_edge, map_cfg.thresholds))
        continue;
      cands.insert(nb[i]);
      eligible.emplace_back(i, nb[i]);
    }
    if (observer) observer->on_step(map, t, current, eligible);

    const int cand_count = cands.active_count();
    const auto t0 = std::chrono::steady_clock::now();
    const SelectionResult sel =
        cands.select(utility, map, map_cfg.thresholds, pcfg.collision_edge, exhaustive);
    res.selection_seconds +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!sel.found) {
      res.trace.terminated_early = true;
      break;
    }
    current = sel.pose;
    visits[sel.key] += 1;
    measure_and_integrate(map, scene, camera, current, opts, t);
    res.trace.rows.push_back(
        {t, current, sel.score, obs_surf(map, octx), cand_count, sel.evals});
    res.sequence.push_back(current);
    res.total_evals += sel.evals;
    ++res.steps;
  }
  if (out_map) *out_map = std::move(map);
  return res;
}

void write_trace_csv(const EpisodeTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "t,x,y,z,yaw,chosen_score,obs_surf,candidate_count,evals_this_step\n";
  for (const TraceRow& r : trace.rows) {
    out << r.t << ',' << format_g17(r.pose.position.x) << ',' << format_g17(r.pose.position.y)
        << ',' << format_g17(r.pose.position.z) << ',' << format_g17(r.pose.yaw) << ','
        << format_g17(r.chosen_score) << ',' << format_g17(r.obs_surf) << ','
        << r.candidate_count << ',' << r.evals << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace nbv
