#include "nbv/ref/reference_kernels.hpp"

#include <algorithm>
#include <cstddef>

#include "nbv/raycast.hpp"

namespace nbv::ref {

DepthImage render_depth(const GroundTruthScene& scene, const Pose& pose,
                        const CameraModel& camera) {
  DepthImage img;
  img.width = camera.width;
  img.height = camera.height;
  img.depth.assign(static_cast<std::size_t>(camera.pixel_count()), kNoReturn);
  for (int j = 0; j < camera.height; ++j)
    for (int i = 0; i < camera.width; ++i) {
      const Vec3 dir = camera.pixel_ray(pose, i, j);
      float d = kNoReturn;
      walk_voxels(scene.grid, pose.position, dir, camera.max_range,
                  [&](const Vec3i& v, double t_entry, double) {
                    if (scene.occupied_at(v)) {
                      d = static_cast<float>(t_entry);
                      return false;
                    }
                    return true;
                  });
      img.depth[static_cast<std::size_t>(j) * camera.width + i] = d;
    }
  return img;
}

std::vector<MultiScaleSample> extract_batch(const OccupancyMap& map,
                                            const std::vector<Pose>& poses,
                                            const FeatureConfig& cfg) {
  std::vector<MultiScaleSample> out;
  out.reserve(poses.size());
  for (const Pose& p : poses) out.push_back(extract(map, p, cfg));
  return out;
}

void conv3d_forward(const net::Act<float>& in, net::Act<float>& out, const float* w, int co) {
  const int B = in.B, Z = in.Z, Y = in.Y, X = in.X, ci = in.C;
  out.resize(B, Z, Y, X, co);
  for (int b = 0; b < B; ++b)
    for (int z = 0; z < Z; ++z)
      for (int y = 0; y < Y; ++y)
        for (int x = 0; x < X; ++x)
          for (int oc = 0; oc < co; ++oc) {
            double acc = 0.0;
            for (int kz = 0; kz < 3; ++kz)
              for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                  const int zz = z + kz - 1, yy = y + ky - 1, xx = x + kx - 1;
                  if (zz < 0 || zz >= Z || yy < 0 || yy >= Y || xx < 0 || xx >= X) continue;
                  for (int ic = 0; ic < ci; ++ic) {
                    const float v =
                        in.sample(b)[((static_cast<std::size_t>(zz) * Y + yy) * X + xx) * ci + ic];
                    const float wv =
                        w[(((static_cast<std::size_t>(kz) * 3 + ky) * 3 + kx) * ci + ic) * co +
                          oc];
                    acc += static_cast<double>(v) * wv;
                  }
                }
            out.sample(b)[((static_cast<std::size_t>(z) * Y + y) * X + x) * co + oc] =
                static_cast<float>(acc);
          }
}

void conv3d_backward_data(const net::Act<float>& dout, net::Act<float>& din, const float* w,
                          int ci) {
  const int B = dout.B, Z = dout.Z, Y = dout.Y, X = dout.X, co = dout.C;
  din.resize(B, Z, Y, X, ci);
  for (int b = 0; b < B; ++b)
    for (int z = 0; z < Z; ++z)
      for (int y = 0; y < Y; ++y)
        for (int x = 0; x < X; ++x)
          for (int ic = 0; ic < ci; ++ic) {
            double acc = 0.0;
            for (int kz = 0; kz < 3; ++kz)
              for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                  const int zz = z + 1 - kz, yy = y + 1 - ky, xx = x + 1 - kx;
                  if (zz < 0 || zz >= Z || yy < 0 || yy >= Y || xx < 0 || xx >= X) continue;
                  for (int oc = 0; oc < co; ++oc) {
                    const float g =
                        dout.sample(
                            b)[((static_cast<std::size_t>(zz) * Y + yy) * X + xx) * co + oc];
                    const float wv =
                        w[(((static_cast<std::size_t>(kz) * 3 + ky) * 3 + kx) * ci + ic) * co +
                          oc];
                    acc += static_cast<double>(g) * wv;
                  }
                }
            din.sample(b)[((static_cast<std::size_t>(z) * Y + y) * X + x) * ci + ic] =
                static_cast<float>(acc);
          }
}

void conv3d_backward_weights(const net::Act<float>& in, const net::Act<float>& dout, float* dw) {
  const int B = in.B, Z = in.Z, Y = in.Y, X = in.X, ci = in.C, co = dout.C;
  for (int kz = 0; kz < 3; ++kz)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx)
        for (int ic = 0; ic < ci; ++ic)
          for (int oc = 0; oc < co; ++oc) {
            double acc = 0.0;
            for (int b = 0; b < B; ++b)
              for (int z = 0; z < Z; ++z)
                for (int y = 0; y < Y; ++y)
                  for (int x = 0; x < X; ++x) {
                    const int zz = z + kz - 1, yy = y + ky - 1, xx = x + kx - 1;
                    if (zz < 0 || zz >= Z || yy < 0 || yy >= Y || xx < 0 || xx >= X) continue;
                    const float v =
                        in.sample(b)[((static_cast<std::size_t>(zz) * Y + yy) * X + xx) * ci + ic];
                    const float g =
                        dout.sample(b)[((static_cast<std::size_t>(z) * Y + y) * X + x) * co + oc];
                    acc += static_cast<double>(v) * g;
                  }
            dw[(((static_cast<std::size_t>(kz) * 3 + ky) * 3 + kx) * ci + ic) * co + oc] +=
                static_cast<float>(acc);
          }
}

void bn_stats(const net::Act<float>& x, float* mean, float* var) {
  const int B = x.B, C = x.C;
  const std::int64_t S = x.spatial();
  const double n = static_cast<double>(B) * S;
  for (int c = 0; c < C; ++c) {
    double sum = 0.0;
    for (int b = 0; b < B; ++b) {
      const float* p = x.sample(b);
      for (std::int64_t s = 0; s < S; ++s) sum += p[s * C + c];
    }
    const double m = sum / n;
    double sq = 0.0;
    for (int b = 0; b < B; ++b) {
      const float* p = x.sample(b);
      for (std::int64_t s = 0; s < S; ++s) {
        const double d = p[s * C + c] - m;
        sq += d * d;
      }
    }
    mean[c] = static_cast<float>(m);
    var[c] = static_cast<float>(sq / n);
  }
}

void fc_forward(const float* in, float* out, int B, int n_in, int n_out, const float* w,
                const float* bias) {
  for (int b = 0; b < B; ++b)
    for (int o = 0; o < n_out; ++o) {
      double acc = bias[o];
      for (int i = 0; i < n_in; ++i)
        acc += static_cast<double>(in[static_cast<std::size_t>(b) * n_in + i]) *
               w[static_cast<std::size_t>(o) * n_in + i];
      out[static_cast<std::size_t>(b) * n_out + o] = static_cast<float>(acc);
    }
}

void fc_backward_params(const float* in, const float* dout, float* dw, float* db, int B, int n_in,
                        int n_out) {
  for (int o = 0; o < n_out; ++o) {
    double acc_b = 0.0;
    for (int b = 0; b < B; ++b) acc_b += dout[static_cast<std::size_t>(b) * n_out + o];
    db[o] += static_cast<float>(acc_b);
    for (int i = 0; i < n_in; ++i) {
      double acc = 0.0;
      for (int b = 0; b < B; ++b)
        acc += static_cast<double>(dout[static_cast<std::size_t>(b) * n_out + o]) *
               in[static_cast<std::size_t>(b) * n_in + i];
      dw[static_cast<std::size_t>(o) * n_in + i] += static_cast<float>(acc);
    }
  }
}

double frontier_score(const OccupancyMap& map, const Pose& pose, const CameraModel& camera,
                      const ClassifyThresholds& thresholds) {
  const GridGeometry& g = map.grid();
  std::vector<std::int64_t> unknown;
  for (int j = 0; j < camera.height; ++j)
    for (int i = 0; i < camera.width; ++i) {
      const Vec3 dir = camera.pixel_ray(pose, i, j);
      walk_voxels(g, pose.position, dir, camera.max_range, [&](const Vec3i& v, double, double) {
        const std::int64_t idx = g.linear_index(v);
        const VoxelClass c = classify_values(map.occ(idx), map.unc(idx), thresholds);
        if (c == VoxelClass::Occupied) return false;
        if (c == VoxelClass::Unknown) unknown.push_back(idx);
        return true;
      });
    }
  std::sort(unknown.begin(), unknown.end());
  unknown.erase(std::unique(unknown.begin(), unknown.end()), unknown.end());
  return static_cast<double>(unknown.size());
}

}  // namespace nbv::ref
