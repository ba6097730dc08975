#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nbv/errors.hpp"
#include "nbv/geometry.hpp"
#include "nbv/io_util.hpp"
#include "nbv/net_kernels.hpp"
#include "nbv/rng.hpp"

// Utility regressor: N_c blocks of N_u (conv 3x3x3 -> batch norm -> ReLU)
// units, channel count growing by filters_increment per unit, 2x max pool
// after each block, then three fully connected layers (hidden1 -> hidden2 ->
// scalar). Parameters live in one flat vector so optimizers and finite
// difference probes can treat the model generically. The scalar type is a
// template parameter: float for production, double for gradient checks.

namespace nbv::net {

struct NetConfig {
  int n_blocks = 2;
  int units_per_block = 4;
  int filters_increment = 8;
  int hidden1 = 128;
  int hidden2 = 32;
  Vec3i input_dims{16, 16, 8};  // feature lattice (Dx, Dy, Dz)
  int input_channels = 6;
  double lambda = 1e-4;
  double dropout_rate = 0.5;
  double learning_rate = 1e-4;
  int batch_size = 128;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  bool regularize_all = false;
  bool normalize_targets = false;
  double target_mean = 0.0;
  double target_std = 1.0;

  int feature_levels() const { return input_channels / 2; }
};

constexpr double kBnMomentum = 0.99;
constexpr double kBnEps = 1e-5;

enum class ParamKind { ConvWeight, BnGamma, BnBeta, FcWeight, FcBias };

struct ParamBlock {
  ParamKind kind;
  std::size_t offset = 0;
  std::size_t count = 0;
  int fan_in = 0;
};

struct NetPlan {
  struct ConvUnit {
    int in_c = 0, out_c = 0;
    int z = 0, y = 0, x = 0;  // spatial dims at this unit
    int block = 0;
    bool last_in_block = false;
    std::size_t w_off = 0, gamma_off = 0, beta_off = 0;
    std::size_t run_off = 0;  // running mean at run_off, variance at run_off + out_c
  };
  std::vector<ConvUnit> convs;
  Vec3i final_spatial{0, 0, 0};  // (x, y, z) after the last pool
  int flat = 0;
  std::size_t fc1_w = 0, fc1_b = 0, fc2_w = 0, fc2_b = 0, out_w = 0, out_b = 0;
  std::size_t theta_size = 0, running_size = 0;
  std::vector<ParamBlock> blocks;
};

inline NetPlan build_plan(const NetConfig& cfg) {
  if (cfg.n_blocks < 1 || cfg.units_per_block < 1 || cfg.filters_increment < 0)
    throw DomainError("invalid network shape");
  if (cfg.hidden1 < 1 || cfg.hidden2 < 1) throw DomainError("invalid hidden layer sizes");
  if (cfg.input_dims.x < 1 || cfg.input_dims.y < 1 || cfg.input_dims.z < 1 ||
      cfg.input_channels < 1)
    throw DomainError("invalid input dimensions");
  if (cfg.input_channels % 2 != 0) throw DomainError("input channels must be even");
  if (cfg.batch_size < 1) throw DomainError("batch size must be positive");
  if (!(cfg.learning_rate > 0.0)) throw DomainError("learning rate must be positive");
  if (!(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0))
    throw DomainError("dropout rate must lie in [0, 1)");
  if (!(cfg.lambda >= 0.0)) throw DomainError("lambda must be non-negative");

  NetPlan plan;
  int cx = cfg.input_dims.x, cy = cfg.input_dims.y, cz = cfg.input_dims.z;
  int channels = cfg.input_channels;
  std::size_t off = 0, run = 0;
  for (int b = 0; b < cfg.n_blocks; ++b) {
    for (int u = 0; u < cfg.units_per_block; ++u) {
      NetPlan::ConvUnit cu;
      cu.in_c = channels;
      cu.out_c = channels + cfg.filters_increment;
      cu.z = cz;
      cu.y = cy;
      cu.x = cx;
      cu.block = b;
      cu.last_in_block = (u == cfg.units_per_block - 1);
      cu.w_off = off;
      const std::size_t wn = static_cast<std::size_t>(27) * cu.in_c * cu.out_c;
      plan.blocks.push_back({ParamKind::ConvWeight, off, wn, 27 * cu.in_c});
      off += wn;
      cu.gamma_off = off;
      plan.blocks.push_back({ParamKind::BnGamma, off, static_cast<std::size_t>(cu.out_c), 0});
      off += cu.out_c;
      cu.beta_off = off;
      plan.blocks.push_back({ParamKind::BnBeta, off, static_cast<std::size_t>(cu.out_c), 0});
      off += cu.out_c;
      cu.run_off = run;
      run += static_cast<std::size_t>(2) * cu.out_c;
      channels = cu.out_c;
      plan.convs.push_back(cu);
    }
    if (cx % 2 != 0 || cy % 2 != 0 || cz % 2 != 0)
      throw DomainError("input dims must halve cleanly in every block");
    cx /= 2;
    cy /= 2;
    cz /= 2;
  }
  plan.final_spatial = {cx, cy, cz};
  plan.flat = cx * cy * cz * channels;

  auto fc = [&](std::size_t& w_off, std::size_t& b_off, int n_in, int n_out) {
    w_off = off;
    plan.blocks.push_back(
        {ParamKind::FcWeight, off, static_cast<std::size_t>(n_in) * n_out, n_in});
    off += static_cast<std::size_t>(n_in) * n_out;
    b_off = off;
    plan.blocks.push_back({ParamKind::FcBias, off, static_cast<std::size_t>(n_out), 0});
    off += n_out;
  };
  fc(plan.fc1_w, plan.fc1_b, plan.flat, cfg.hidden1);
  fc(plan.fc2_w, plan.fc2_b, cfg.hidden1, cfg.hidden2);
  fc(plan.out_w, plan.out_b, cfg.hidden2, 1);
  plan.theta_size = off;
  plan.running_size = run;
  return plan;
}

template <typename T>
struct Model {
  NetConfig cfg;
  NetPlan plan;
  std::vector<T> theta;
  std::vector<T> running;
};

// Weights ~ N(0, 2 / fan_in); batch-norm scales 1, shifts and biases 0,
// running statistics (0, 1). Only weight blocks consume random draws.
template <typename T>
Model<T> init_model(const NetConfig& cfg) {
  Model<T> m;
  m.cfg = cfg;
  m.plan = build_plan(cfg);
  m.theta.assign(m.plan.theta_size, T(0));
  m.running.assign(m.plan.running_size, T(0));
  Rng rng(substream(cfg.seed, "net"));
  for (const ParamBlock& b : m.plan.blocks) {
    switch (b.kind) {
      case ParamKind::ConvWeight:
      case ParamKind::FcWeight: {
        const double sd = std::sqrt(2.0 / b.fan_in);
        for (std::size_t i = 0; i < b.count; ++i)
          m.theta[b.offset + i] = static_cast<T>(rng.normal(0.0, sd));
        break;
      }
      case ParamKind::BnGamma:
        for (std::size_t i = 0; i < b.count; ++i) m.theta[b.offset + i] = T(1);
        break;
      case ParamKind::BnBeta:
      case ParamKind::FcBias:
        break;
    }
  }
  for (const NetPlan::ConvUnit& cu : m.plan.convs)
    for (int c = 0; c < cu.out_c; ++c) m.running[cu.run_off + cu.out_c + c] = T(1);
  return m;
}

inline bool block_regularized(const ParamBlock& b, const NetConfig& cfg) {
  if (cfg.regularize_all) return true;
  return b.kind == ParamKind::ConvWeight || b.kind == ParamKind::FcWeight;
}

struct ForwardOptions {
  bool training = false;      // batch statistics, dropout, running-stat updates
  bool freeze_stats = false;  // training mode but with running statistics
  Rng* dropout = nullptr;
};

template <typename T>
struct BatchWork {
  Act<T> input;
  std::vector<Act<T>> conv_out, unit_out;
  std::vector<Act<T>> pool_out;
  std::vector<std::vector<std::uint8_t>> pool_arg;
  std::vector<std::vector<T>> bn_mean, bn_inv_std;
  std::vector<T> f1_relu, f1_drop, f2_relu, f2_drop, mask1, mask2, pred;
  ForwardOptions opts;
  Act<T> d_a, d_b;
  std::vector<T> dpred, df1, df2;
};

template <typename T>
const Act<T>& conv_input(const BatchWork<T>& work, const NetPlan& plan, int unit) {
  if (unit == 0) return work.input;
  const NetPlan::ConvUnit& cu = plan.convs[unit];
  if (plan.convs[unit - 1].block != cu.block) return work.pool_out[cu.block - 1];
  return work.unit_out[unit - 1];
}

template <typename T>
void forward(Model<T>& net, const float* const* xs, int B, const ForwardOptions& opts,
             BatchWork<T>& work) {
  const NetPlan& plan = net.plan;
  const NetConfig& cfg = net.cfg;
  const int n_units = static_cast<int>(plan.convs.size());
  work.opts = opts;
  work.conv_out.resize(n_units);
  work.unit_out.resize(n_units);
  work.pool_out.resize(cfg.n_blocks);
  work.pool_arg.resize(cfg.n_blocks);
  work.bn_mean.assign(n_units, {});
  work.bn_inv_std.assign(n_units, {});

  work.input.resize(B, cfg.input_dims.z, cfg.input_dims.y, cfg.input_dims.x,
                    cfg.input_channels);
  const std::size_t in_n = work.input.per_sample();
#pragma omp parallel for schedule(static)
  for (int b = 0; b < B; ++b) {
    T* dst = work.input.sample(b);
    const float* src = xs[b];
    for (std::size_t i = 0; i < in_n; ++i) dst[i] = static_cast<T>(src[i]);
  }

  const bool use_batch_stats = opts.training && !opts.freeze_stats;
  const bool use_dropout = opts.training && cfg.dropout_rate > 0.0;
  if (use_dropout) {
    if (opts.dropout == nullptr) throw DomainError("dropout requires an RNG");
    work.mask1.resize(static_cast<std::size_t>(B) * cfg.hidden1);
    work.mask2.resize(static_cast<std::size_t>(B) * cfg.hidden2);
    dropout_masks(*opts.dropout, work.mask1.data(), work.mask1.size(), cfg.dropout_rate);
    dropout_masks(*opts.dropout, work.mask2.data(), work.mask2.size(), cfg.dropout_rate);
  }

  for (int i = 0; i < n_units; ++i) {
    const NetPlan::ConvUnit& cu = plan.convs[i];
    const Act<T>& src = conv_input(work, plan, i);
    conv3d_forward(src, work.conv_out[i], net.theta.data() + cu.w_off, cu.out_c);

    std::vector<T>& mean = work.bn_mean[i];
    std::vector<T>& inv_std = work.bn_inv_std[i];
    mean.resize(cu.out_c);
    inv_std.resize(cu.out_c);
    if (use_batch_stats) {
      std::vector<T> var(cu.out_c);
      bn_stats(work.conv_out[i], mean.data(), var.data());
      for (int c = 0; c < cu.out_c; ++c)
        inv_std[c] =
            static_cast<T>(1.0 / std::sqrt(static_cast<double>(var[c]) + kBnEps));
      T* rmean = net.running.data() + cu.run_off;
      T* rvar = rmean + cu.out_c;
      for (int c = 0; c < cu.out_c; ++c) {
        rmean[c] = static_cast<T>(kBnMomentum * rmean[c] + (1.0 - kBnMomentum) * mean[c]);
        rvar[c] = static_cast<T>(kBnMomentum * rvar[c] + (1.0 - kBnMomentum) * var[c]);
      }
    } else {
      const T* rmean = net.running.data() + cu.run_off;
      const T* rvar = rmean + cu.out_c;
      for (int c = 0; c < cu.out_c; ++c) {
        mean[c] = rmean[c];
        inv_std[c] =
            static_cast<T>(1.0 / std::sqrt(static_cast<double>(rvar[c]) + kBnEps));
      }
    }
    bn_apply_relu(work.conv_out[i], work.unit_out[i], mean.data(), inv_std.data(),
                  net.theta.data() + cu.gamma_off, net.theta.data() + cu.beta_off);
    if (cu.last_in_block)
      maxpool2_forward(work.unit_out[i], work.pool_out[cu.block], work.pool_arg[cu.block]);
  }

  const Act<T>& flat = work.pool_out[cfg.n_blocks - 1];
  work.f1_relu.resize(static_cast<std::size_t>(B) * cfg.hidden1);
  work.f2_relu.resize(static_cast<std::size_t>(B) * cfg.hidden2);
  work.f1_drop.resize(work.f1_relu.size());
  work.f2_drop.resize(work.f2_relu.size());
  work.pred.resize(B);

  fc_forward(flat.v.data(), work.f1_relu.data(), B, plan.flat, cfg.hidden1,
             net.theta.data() + plan.fc1_w, net.theta.data() + plan.fc1_b);
  for (std::size_t i = 0; i < work.f1_relu.size(); ++i) {
    const T r = work.f1_relu[i] > T(0) ? work.f1_relu[i] : T(0);
    work.f1_relu[i] = r;
    work.f1_drop[i] = use_dropout ? r * work.mask1[i] : r;
  }
  fc_forward(work.f1_drop.data(), work.f2_relu.data(), B, cfg.hidden1, cfg.hidden2,
             net.theta.data() + plan.fc2_w, net.theta.data() + plan.fc2_b);
  for (std::size_t i = 0; i < work.f2_relu.size(); ++i) {
    const T r = work.f2_relu[i] > T(0) ? work.f2_relu[i] : T(0);
    work.f2_relu[i] = r;
    work.f2_drop[i] = use_dropout ? r * work.mask2[i] : r;
  }
  fc_forward(work.f2_drop.data(), work.pred.data(), B, cfg.hidden2, 1,
             net.theta.data() + plan.out_w, net.theta.data() + plan.out_b);
}

// Loss = sum over the batch of (prediction - target)^2 plus
// lambda * sum of squared regularized parameters. Targets are taken as-is
// (callers apply target normalization before building batches). Gradients are
// accumulated into `grad`, which must be zero-filled by the caller.
template <typename T>
double backward(Model<T>& net, const float* ys, int B, BatchWork<T>& work,
                std::vector<T>& grad) {
  const NetPlan& plan = net.plan;
  const NetConfig& cfg = net.cfg;
  const bool use_batch_stats = work.opts.training && !work.opts.freeze_stats;
  const bool use_dropout = work.opts.training && cfg.dropout_rate > 0.0;

  double loss = 0.0;
  work.dpred.resize(B);
  for (int b = 0; b < B; ++b) {
    const double r = static_cast<double>(work.pred[b]) - static_cast<double>(ys[b]);
    loss += r * r;
    work.dpred[b] = static_cast<T>(2.0 * r);
  }

  work.df2.resize(static_cast<std::size_t>(B) * cfg.hidden2);
  work.df1.resize(static_cast<std::size_t>(B) * cfg.hidden1);
  fc_backward_params(work.f2_drop.data(), work.dpred.data(), grad.data() + plan.out_w,
                     grad.data() + plan.out_b, B, cfg.hidden2, 1);
  fc_backward_data(work.dpred.data(), work.df2.data(), B, cfg.hidden2, 1,
                   net.theta.data() + plan.out_w);
  for (std::size_t i = 0; i < work.df2.size(); ++i) {
    T g = use_dropout ? work.df2[i] * work.mask2[i] : work.df2[i];
    work.df2[i] = work.f2_relu[i] > T(0) ? g : T(0);
  }
  fc_backward_params(work.f1_drop.data(), work.df2.data(), grad.data() + plan.fc2_w,
                     grad.data() + plan.fc2_b, B, cfg.hidden1, cfg.hidden2);
  fc_backward_data(work.df2.data(), work.df1.data(), B, cfg.hidden1, cfg.hidden2,
                   net.theta.data() + plan.fc2_w);
  for (std::size_t i = 0; i < work.df1.size(); ++i) {
    T g = use_dropout ? work.df1[i] * work.mask1[i] : work.df1[i];
    work.df1[i] = work.f1_relu[i] > T(0) ? g : T(0);
  }
  const Act<T>& flat = work.pool_out[cfg.n_blocks - 1];
  fc_backward_params(flat.v.data(), work.df1.data(), grad.data() + plan.fc1_w,
                     grad.data() + plan.fc1_b, B, plan.flat, cfg.hidden1);

  Act<T>& d_cur = work.d_a;
  Act<T>& d_tmp = work.d_b;
  d_cur.resize(flat.B, flat.Z, flat.Y, flat.X, flat.C);
  fc_backward_data(work.df1.data(), d_cur.v.data(), B, plan.flat, cfg.hidden1,
                   net.theta.data() + plan.fc1_w);

  const int n_units = static_cast<int>(plan.convs.size());
  for (int i = n_units - 1; i >= 0; --i) {
    const NetPlan::ConvUnit& cu = plan.convs[i];
    if (cu.last_in_block) {
      maxpool2_backward(d_cur, work.pool_arg[cu.block], d_tmp, cu.z, cu.y, cu.x);
      std::swap(d_cur, d_tmp);
    }
    bn_relu_backward(d_cur, work.unit_out[i], work.conv_out[i], work.bn_mean[i].data(),
                     work.bn_inv_std[i].data(), net.theta.data() + cu.gamma_off,
                     use_batch_stats, d_tmp, grad.data() + cu.gamma_off,
                     grad.data() + cu.beta_off);
    std::swap(d_cur, d_tmp);
    const Act<T>& src = conv_input(work, plan, i);
    conv3d_backward_weights(src, d_cur, grad.data() + cu.w_off);
    if (i > 0) {
      conv3d_backward_data(d_cur, d_tmp, net.theta.data() + cu.w_off, cu.in_c);
      std::swap(d_cur, d_tmp);
    }
  }

  if (cfg.lambda > 0.0) {
    const T two_lambda = static_cast<T>(2.0 * cfg.lambda);
    for (const ParamBlock& b : plan.blocks) {
      if (!block_regularized(b, cfg)) continue;
      double s = 0.0;
      for (std::size_t i = 0; i < b.count; ++i) {
        const T w = net.theta[b.offset + i];
        s += static_cast<double>(w) * static_cast<double>(w);
        grad[b.offset + i] += two_lambda * w;
      }
      loss += cfg.lambda * s;
    }
  }
  return loss;
}

template <typename T>
double loss_and_grad(Model<T>& net, const float* const* xs, const float* ys, int B,
                     const ForwardOptions& opts, BatchWork<T>& work, std::vector<T>& grad) {
  grad.assign(net.plan.theta_size, T(0));
  forward(net, xs, B, opts, work);
  return backward(net, ys, B, work, grad);
}

// Inference pass. Never mutates the model; running statistics are used for
// normalization and dropout is disabled.
template <typename T>
void predict_batch(const Model<T>& net, const float* const* xs, int B, BatchWork<T>& work) {
  ForwardOptions opts;
  forward(const_cast<Model<T>&>(net), xs, B, opts, work);
}

// Single-sample utility in original target units, clamped below at zero.
template <typename T>
double predict_utility(const Model<T>& net, const float* x, BatchWork<T>& work) {
  const float* xs[1] = {x};
  predict_batch(net, xs, 1, work);
  const double raw = static_cast<double>(work.pred[0]);
  const double value = raw * net.cfg.target_std + net.cfg.target_mean;
  return value > 0.0 ? value : 0.0;
}

template <typename T>
struct AdamState {
  std::vector<T> m, v;
  std::int64_t step = 0;
};

template <typename T>
void adam_step(Model<T>& net, const std::vector<T>& grad, AdamState<T>& state) {
  const NetConfig& cfg = net.cfg;
  if (state.m.empty()) {
    state.m.assign(net.plan.theta_size, T(0));
    state.v.assign(net.plan.theta_size, T(0));
  }
  state.step += 1;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const double alpha = cfg.learning_rate;
  const std::size_t n = net.plan.theta_size;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    const double g = static_cast<double>(grad[i]);
    const double m = b1 * static_cast<double>(state.m[i]) + (1.0 - b1) * g;
    const double v = b2 * static_cast<double>(state.v[i]) + (1.0 - b2) * g * g;
    state.m[i] = static_cast<T>(m);
    state.v[i] = static_cast<T>(v);
    const double mh = m / bc1;
    const double vh = v / bc2;
    net.theta[i] -= static_cast<T>(alpha * mh / (std::sqrt(vh) + cfg.adam_eps));
  }
}

struct SampleRef {
  const float* x = nullptr;
  float y = 0.0f;
};

struct EpochStat {
  int epoch = 0;
  double train_loss = 0.0;  // summed step losses (data + regularizer)
  double val_loss = 0.0;    // summed squared error on the validation split
};

struct TrainOptions {
  int max_epochs = 100;
  int patience = 10;
  std::function<void(const EpochStat&)> on_epoch;
};

struct TrainReport {
  std::vector<EpochStat> curve;
  int best_epoch = -1;
  double best_metric = 0.0;
  int epochs_run = 0;
};

template <typename T>
double eval_sum_squared_error(const Model<T>& net, const std::vector<SampleRef>& data,
                              BatchWork<T>& work) {
  double total = 0.0;
  const int B = net.cfg.batch_size;
  std::vector<const float*> xs;
  for (std::size_t at = 0; at < data.size(); at += B) {
    const int n = static_cast<int>(std::min<std::size_t>(B, data.size() - at));
    xs.resize(n);
    for (int i = 0; i < n; ++i) xs[i] = data[at + i].x;
    predict_batch(net, xs.data(), n, work);
    for (int i = 0; i < n; ++i) {
      const double r =
          static_cast<double>(work.pred[i]) - static_cast<double>(data[at + i].y);
      total += r * r;
    }
  }
  return total;
}

// Minimizes the batch loss with Adam. When target normalization is enabled
// the affine transform is fitted on the training split and stored in the
// model config; training and validation then run in normalized units.
// Early stopping tracks the validation metric (training loss when the
// validation split is empty) and restores the best parameters.
template <typename T>
TrainReport train(Model<T>& net, std::vector<SampleRef> train_set,
                  std::vector<SampleRef> val_set, const TrainOptions& topt) {
  if (train_set.empty()) throw DomainError("training split is empty");
  NetConfig& cfg = net.cfg;

  if (cfg.normalize_targets) {
    double mean = 0.0;
    for (const SampleRef& s : train_set) mean += s.y;
    mean /= static_cast<double>(train_set.size());
    double var = 0.0;
    for (const SampleRef& s : train_set) {
      const double d = s.y - mean;
      var += d * d;
    }
    var /= static_cast<double>(train_set.size());
    cfg.target_mean = mean;
    cfg.target_std = var > 1e-24 ? std::sqrt(var) : 1.0;
  } else {
    cfg.target_mean = 0.0;
    cfg.target_std = 1.0;
  }
  auto norm_targets = [&](std::vector<SampleRef>& set) {
    for (SampleRef& s : set)
      s.y = static_cast<float>((s.y - cfg.target_mean) / cfg.target_std);
  };
  norm_targets(train_set);
  norm_targets(val_set);

  const int n = static_cast<int>(train_set.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  BatchWork<T> work;
  std::vector<T> grad;
  AdamState<T> adam;
  std::vector<const float*> xs(cfg.batch_size);
  std::vector<float> ys(cfg.batch_size);

  TrainReport report;
  double best = 0.0;
  bool have_best = false;
  std::vector<T> best_theta, best_running;
  int since_best = 0;
  std::int64_t step = 0;

  for (int epoch = 0; epoch < topt.max_epochs; ++epoch) {
    Rng shuffle_rng(substream(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(shuffle_rng.next_below(static_cast<std::uint64_t>(i) + 1));
      std::swap(order[i], order[j]);
    }

    double train_loss = 0.0;
    for (int at = 0; at < n; at += cfg.batch_size) {
      const int B = std::min(cfg.batch_size, n - at);
      for (int i = 0; i < B; ++i) {
        xs[i] = train_set[order[at + i]].x;
        ys[i] = train_set[order[at + i]].y;
      }
      Rng drop_rng(substream(cfg.seed, "dropout", static_cast<std::uint64_t>(step)));
      ForwardOptions opts;
      opts.training = true;
      opts.dropout = &drop_rng;
      train_loss += loss_and_grad(net, xs.data(), ys.data(), B, opts, work, grad);
      adam_step(net, grad, adam);
      ++step;
    }

    EpochStat stat;
    stat.epoch = epoch;
    stat.train_loss = train_loss;
    stat.val_loss =
        val_set.empty() ? train_loss : eval_sum_squared_error(net, val_set, work);
    report.curve.push_back(stat);
    report.epochs_run = epoch + 1;
    if (topt.on_epoch) topt.on_epoch(stat);

    const double metric = stat.val_loss;
    if (!have_best || metric < best) {
      best = metric;
      have_best = true;
      best_theta = net.theta;
      best_running = net.running;
      report.best_epoch = epoch;
      report.best_metric = best;
      since_best = 0;
    } else {
      ++since_best;
      if (since_best > topt.patience) break;
    }
  }
  if (have_best) {
    net.theta = best_theta;
    net.running = best_running;
  }
  return report;
}

// -- serialization -----------------------------------------------------------

constexpr char kNetMagic[4] = {'N', 'B', 'V', 'N'};
constexpr std::uint32_t kNetVersion = 1;

template <typename T>
void save_model(const Model<T>& net, const std::string& path) {
  BinaryWriter w(path);
  w.write_magic(kNetMagic);
  w.write<std::uint32_t>(kNetVersion);
  const NetConfig& c = net.cfg;
  w.write<std::uint32_t>(static_cast<std::uint32_t>(c.n_blocks));
  w.write<std::uint32_t>(static_cast<std::uint32_t>(c.units_per_block));
  w.write<std::uint32_t>(static_cast<std::uint32_t>(c.filters_increment));
  w.write<std::uint32_t>(static_cast<std::uint32_t>(c.hidden1));
  w.write<std::uint32_t>(static_cast<std::uint32_t>(c.hidden2));
  w.write<std::uint32_t>(static_cast<std::uint32_t>(c.input_dims.x));
  w.write<std::uint32_t>(static_cast<std::uint32_t>(c.input_dims.y));
  w.write<std::uint32_t>(static_cast<std::uint32_t>(c.input_dims.z));
  w.write<std::uint32_t>(static_cast<std::uint32_t>(c.input_channels));
  w.write<std::uint32_t>(c.regularize_all ? 1u : 0u);
  w.write<std::uint32_t>(c.normalize_targets ? 1u : 0u);
  w.write<double>(c.target_mean);
  w.write<double>(c.target_std);
  w.write<double>(c.lambda);
  w.write<double>(c.dropout_rate);
  w.write<double>(c.learning_rate);
  w.write<std::uint32_t>(static_cast<std::uint32_t>(c.batch_size));
  w.write<double>(c.adam_beta1);
  w.write<double>(c.adam_beta2);
  w.write<double>(c.adam_eps);
  w.write<std::uint64_t>(c.seed);
  w.write<std::uint64_t>(static_cast<std::uint64_t>(net.plan.theta_size));
  w.write<std::uint64_t>(static_cast<std::uint64_t>(net.plan.running_size));
  for (std::size_t i = 0; i < net.plan.theta_size; ++i)
    w.write<float>(static_cast<float>(net.theta[i]));
  for (std::size_t i = 0; i < net.plan.running_size; ++i)
    w.write<float>(static_cast<float>(net.running[i]));
  w.close();
}

template <typename T>
Model<T> load_model(const std::string& path) {
  BinaryReader r(path);
  r.expect_magic(kNetMagic, "network model");
  const auto version = r.read<std::uint32_t>();
  if (version != kNetVersion)
    throw FormatError(path + ": unsupported network version " + std::to_string(version));
  NetConfig c;
  c.n_blocks = static_cast<int>(r.read<std::uint32_t>());
  c.units_per_block = static_cast<int>(r.read<std::uint32_t>());
  c.filters_increment = static_cast<int>(r.read<std::uint32_t>());
  c.hidden1 = static_cast<int>(r.read<std::uint32_t>());
  c.hidden2 = static_cast<int>(r.read<std::uint32_t>());
  c.input_dims.x = static_cast<int>(r.read<std::uint32_t>());
  c.input_dims.y = static_cast<int>(r.read<std::uint32_t>());
  c.input_dims.z = static_cast<int>(r.read<std::uint32_t>());
  c.input_channels = static_cast<int>(r.read<std::uint32_t>());
  c.regularize_all = r.read<std::uint32_t>() != 0;
  c.normalize_targets = r.read<std::uint32_t>() != 0;
  c.target_mean = r.read<double>();
  c.target_std = r.read<double>();
  c.lambda = r.read<double>();
  c.dropout_rate = r.read<double>();
  c.learning_rate = r.read<double>();
  c.batch_size = static_cast<int>(r.read<std::uint32_t>());
  c.adam_beta1 = r.read<double>();
  c.adam_beta2 = r.read<double>();
  c.adam_eps = r.read<double>();
  c.seed = r.read<std::uint64_t>();

  Model<T> m;
  m.cfg = c;
  try {
    m.plan = build_plan(c);
  } catch (const DomainError& e) {
    throw FormatError(path + ": " + e.what());
  }
  const auto theta_size = r.read<std::uint64_t>();
  const auto running_size = r.read<std::uint64_t>();
  if (theta_size != m.plan.theta_size || running_size != m.plan.running_size)
    throw FormatError(path + ": parameter counts do not match the architecture");
  m.theta.resize(m.plan.theta_size);
  m.running.resize(m.plan.running_size);
  for (std::size_t i = 0; i < m.plan.theta_size; ++i)
    m.theta[i] = static_cast<T>(r.read<float>());
  for (std::size_t i = 0; i < m.plan.running_size; ++i)
    m.running[i] = static_cast<T>(r.read<float>());
  if (!r.at_eof()) throw FormatError(path + ": trailing bytes");
  return m;
}

}  // namespace nbv::net
