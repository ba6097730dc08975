#pragma once

#include <vector>

#include "nbv/features.hpp"
#include "nbv/net_kernels.hpp"
#include "nbv/occupancy.hpp"
#include "nbv/scene.hpp"
#include "nbv/sensor.hpp"

// Serial reference implementations of the parallel kernels, written as the
// plainest possible loops. Tests compare the optimized paths against these;
// the benchmark tool measures the gap. Reductions accumulate in double in
// natural order, so float results may differ from the blocked parallel
// versions by rounding only.

namespace nbv::ref {

DepthImage render_depth(const GroundTruthScene& scene, const Pose& pose,
                        const CameraModel& camera);

std::vector<MultiScaleSample> extract_batch(const OccupancyMap& map,
                                            const std::vector<Pose>& poses,
                                            const FeatureConfig& cfg);

void conv3d_forward(const net::Act<float>& in, net::Act<float>& out, const float* w, int co);
void conv3d_backward_data(const net::Act<float>& dout, net::Act<float>& din, const float* w,
                          int ci);
void conv3d_backward_weights(const net::Act<float>& in, const net::Act<float>& dout, float* dw);
void bn_stats(const net::Act<float>& x, float* mean, float* var);
void fc_forward(const float* in, float* out, int B, int n_in, int n_out, const float* w,
                const float* bias);
void fc_backward_params(const float* in, const float* dout, float* dw, float* db, int B, int n_in,
                        int n_out);

// Frontier count via explicit collection and deduplication of unknown voxels,
// independent of the planner's visited-stamp approach.
double frontier_score(const OccupancyMap& map, const Pose& pose, const CameraModel& camera,
                      const ClassifyThresholds& thresholds);

}  // namespace nbv::ref
