#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "nbv/net_kernels.hpp"
#include "nbv/occupancy.hpp"
#include "nbv/oracle.hpp"
#include "nbv/parallel.hpp"
#include "nbv/planner.hpp"
#include "nbv/ref/reference_kernels.hpp"
#include "nbv/rng.hpp"
#include "nbv/scene.hpp"
#include "nbv/sensor.hpp"

// Times the OpenMP kernels against their serial references on a medium-size
// workload. Prints one line per kernel: name, serial ms, parallel ms, speedup.

namespace {

using namespace nbv;

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double serial_ms, double parallel_ms) {
  std::printf("%-24s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx\n", name, serial_ms,
              parallel_ms, serial_ms / parallel_ms);
}

}  // namespace

int main() {
  configure_threads();
  std::printf("threads: %d\n", effective_threads());

  CitySceneParams params;
  const GroundTruthScene scene = generate_city_scene(7, params);
  CameraModel camera;
  const Pose pose{{20.0, 20.0, 6.0}, 0.7};

  {
    const auto serial = time_ms([&] { (void)ref::render_depth(scene, pose, camera); }, 5);
    const auto parallel = time_ms([&] { (void)render_depth(scene, pose, camera); }, 5);
    report("render_depth", serial, parallel);
  }

  MapConfig map_cfg;
  OccupancyMap map = init_map(scene.grid, map_cfg, pose.position);
  map.integrate_measurement(pose, render_depth(scene, pose, camera), camera);

  {
    FeatureConfig fc;
    std::vector<Pose> poses;
    Rng rng(3);
    for (int i = 0; i < 32; ++i)
      poses.push_back({{rng.uniform(8.0, 32.0), rng.uniform(8.0, 32.0), rng.uniform(2.0, 10.0)},
                       rng.uniform(0.0, 6.28)});
    const auto serial = time_ms([&] { (void)ref::extract_batch(map, poses, fc); }, 3);
    const auto parallel = time_ms([&] { (void)extract_batch(map, poses, fc); }, 3);
    report("extract_batch x32", serial, parallel);
  }

  {
    const int B = 32, Z = 8, Y = 16, X = 16, CI = 6, CO = 16;
    net::Act<float> in, out, ref_out, dout, din, ref_din;
    in.resize(B, Z, Y, X, CI);
    Rng rng(11);
    for (auto& v : in.v) v = static_cast<float>(rng.normal());
    std::vector<float> w(27 * CI * CO);
    for (auto& v : w) v = static_cast<float>(rng.normal(0.0, 0.1));

    const auto fs = time_ms([&] { ref::conv3d_forward(in, ref_out, w.data(), CO); }, 3);
    const auto fp = time_ms([&] { net::conv3d_forward(in, out, w.data(), CO); }, 3);
    report("conv3d_forward", fs, fp);

    dout = out;
    const auto ds = time_ms([&] { ref::conv3d_backward_data(dout, ref_din, w.data(), CI); }, 3);
    const auto dp = time_ms([&] { net::conv3d_backward_data(dout, din, w.data(), CI); }, 3);
    report("conv3d_backward_data", ds, dp);

    std::vector<float> dw(w.size(), 0.0f), ref_dw(w.size(), 0.0f);
    const auto ws =
        time_ms([&] { ref::conv3d_backward_weights(in, dout, ref_dw.data()); }, 3);
    const auto wp = time_ms([&] { net::conv3d_backward_weights(in, dout, dw.data()); }, 3);
    report("conv3d_backward_weights", ws, wp);

    std::vector<float> mean(CI), var(CI);
    const auto bs = time_ms([&] { ref::bn_stats(in, mean.data(), var.data()); }, 5);
    const auto bp = time_ms([&] { net::bn_stats(in, mean.data(), var.data()); }, 5);
    report("bn_stats", bs, bp);
  }

  {
    const int B = 128, NI = 1024, NO = 128;
    Rng rng(13);
    std::vector<float> x(static_cast<std::size_t>(B) * NI), y(static_cast<std::size_t>(B) * NO);
    std::vector<float> w(static_cast<std::size_t>(NO) * NI), bias(NO);
    for (auto& v : x) v = static_cast<float>(rng.normal());
    for (auto& v : w) v = static_cast<float>(rng.normal(0.0, 0.05));
    for (auto& v : bias) v = static_cast<float>(rng.normal());

    const auto fs = time_ms([&] { ref::fc_forward(x.data(), y.data(), B, NI, NO, w.data(), bias.data()); }, 5);
    const auto fp = time_ms([&] { net::fc_forward(x.data(), y.data(), B, NI, NO, w.data(), bias.data()); }, 5);
    report("fc_forward", fs, fp);

    std::vector<float> dw(w.size(), 0.0f), db(NO, 0.0f);
    const auto ps = time_ms(
        [&] { ref::fc_backward_params(x.data(), y.data(), dw.data(), db.data(), B, NI, NO); }, 5);
    const auto pp = time_ms(
        [&] { net::fc_backward_params(x.data(), y.data(), dw.data(), db.data(), B, NI, NO); }, 5);
    report("fc_backward_params", ps, pp);
  }

  {
    FrontierUtility frontier(camera, map_cfg.thresholds);
    const auto serial =
        time_ms([&] { (void)ref::frontier_score(map, pose, camera, map_cfg.thresholds); }, 5);
    const auto parallel = time_ms([&] { (void)frontier.score(map, pose); }, 5);
    report("frontier_score", serial, parallel);
  }

  return 0;
}
