#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <cstring>
#include <vector>

#include "nbv/rng.hpp"

// Dense kernels for the 3D ConvNet. Layouts are channel-last:
// activations (B, Z, Y, X, C); conv weights (kz, ky, kx, Cin, Cout) with Cout
// contiguous, so inner loops run over contiguous memory.
//
// Reductions that cross samples (weight gradients, batch-norm statistics)
// accumulate per fixed-size sample block and then combine blocks in order,
// which makes results independent of the OpenMP thread count.

namespace nbv::net {

constexpr int kGradBlocks = 16;

inline int grad_blocks(int batch) { return std::min(batch, kGradBlocks); }

template <typename T>
struct Act {
  int B = 0, Z = 0, Y = 0, X = 0, C = 0;
  std::vector<T> v;

  void resize(int b, int z, int y, int x, int c) {
    B = b;
    Z = z;
    Y = y;
    X = x;
    C = c;
    v.resize(static_cast<std::size_t>(b) * z * y * x * c);
  }
  std::int64_t spatial() const { return static_cast<std::int64_t>(Z) * Y * X; }
  std::size_t per_sample() const { return static_cast<std::size_t>(spatial()) * C; }
  T* sample(int b) { return v.data() + per_sample() * b; }
  const T* sample(int b) const { return v.data() + per_sample() * b; }
};

template <typename T>
void conv3d_forward(const Act<T>& in, Act<T>& out, const T* w, int co) {
  const int B = in.B, Z = in.Z, Y = in.Y, X = in.X, ci = in.C;
  out.resize(B, Z, Y, X, co);
  assert(co <= 512);
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < B; ++b)
    for (int z = 0; z < Z; ++z) {
      T acc[512];
      for (int y = 0; y < Y; ++y)
        for (int x = 0; x < X; ++x) {
          for (int oc = 0; oc < co; ++oc) acc[oc] = T(0);
          for (int kz = 0; kz < 3; ++kz) {
            const int zz = z + kz - 1;
            if (zz < 0 || zz >= Z) continue;
            for (int ky = 0; ky < 3; ++ky) {
              const int yy = y + ky - 1;
              if (yy < 0 || yy >= Y) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int xx = x + kx - 1;
                if (xx < 0 || xx >= X) continue;
                const T* inp =
                    in.sample(b) + ((static_cast<std::size_t>(zz) * Y + yy) * X + xx) * ci;
                const T* wk = w + ((static_cast<std::size_t>(kz) * 3 + ky) * 3 + kx) * ci * co;
                for (int icd = 0; icd < ci; ++icd) {
                  const T val = inp[icd];
                  const T* wrow = wk + static_cast<std::size_t>(icd) * co;
                  for (int oc = 0; oc < co; ++oc) acc[oc] += val * wrow[oc];
                }
              }
            }
          }
          T* outp = out.sample(b) + ((static_cast<std::size_t>(z) * Y + y) * X + x) * co;
          for (int oc = 0; oc < co; ++oc) outp[oc] = acc[oc];
        }
    }
}

template <typename T>
void conv3d_backward_data(const Act<T>& dout, Act<T>& din, const T* w, int ci) {
  const int B = dout.B, Z = dout.Z, Y = dout.Y, X = dout.X, co = dout.C;
  din.resize(B, Z, Y, X, ci);
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < B; ++b)
    for (int z = 0; z < Z; ++z) {
      T acc[512];
      for (int y = 0; y < Y; ++y)
        for (int x = 0; x < X; ++x) {
          for (int icd = 0; icd < ci; ++icd) acc[icd] = T(0);
          // out(z') depends on in(z' + k - 1), so in(z) feeds out(z + 1 - k).
          for (int kz = 0; kz < 3; ++kz) {
            const int zz = z + 1 - kz;
            if (zz < 0 || zz >= Z) continue;
            for (int ky = 0; ky < 3; ++ky) {
              const int yy = y + 1 - ky;
              if (yy < 0 || yy >= Y) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int xx = x + 1 - kx;
                if (xx < 0 || xx >= X) continue;
                const T* dp =
                    dout.sample(b) + ((static_cast<std::size_t>(zz) * Y + yy) * X + xx) * co;
                const T* wk = w + ((static_cast<std::size_t>(kz) * 3 + ky) * 3 + kx) * ci * co;
                for (int icd = 0; icd < ci; ++icd) {
                  const T* wrow = wk + static_cast<std::size_t>(icd) * co;
                  T a = T(0);
                  for (int oc = 0; oc < co; ++oc) a += dp[oc] * wrow[oc];
                  acc[icd] += a;
                }
              }
            }
          }
          T* dinp = din.sample(b) + ((static_cast<std::size_t>(z) * Y + y) * X + x) * ci;
          for (int icd = 0; icd < ci; ++icd) dinp[icd] = acc[icd];
        }
    }
}

template <typename T>
void conv3d_backward_weights(const Act<T>& in, const Act<T>& dout, T* dw) {
  const int B = in.B, Z = in.Z, Y = in.Y, X = in.X, ci = in.C, co = dout.C;
  const std::size_t wsize = static_cast<std::size_t>(27) * ci * co;
  const int nblk = grad_blocks(B);
  std::vector<T> partial(static_cast<std::size_t>(nblk) * wsize, T(0));
#pragma omp parallel for schedule(static)
  for (int blk = 0; blk < nblk; ++blk) {
    T* local = partial.data() + static_cast<std::size_t>(blk) * wsize;
    const int b0 = static_cast<int>(static_cast<std::int64_t>(blk) * B / nblk);
    const int b1 = static_cast<int>(static_cast<std::int64_t>(blk + 1) * B / nblk);
    for (int b = b0; b < b1; ++b)
      for (int z = 0; z < Z; ++z)
        for (int y = 0; y < Y; ++y)
          for (int x = 0; x < X; ++x) {
            const T* dp = dout.sample(b) + ((static_cast<std::size_t>(z) * Y + y) * X + x) * co;
            for (int kz = 0; kz < 3; ++kz) {
              const int zz = z + kz - 1;
              if (zz < 0 || zz >= Z) continue;
              for (int ky = 0; ky < 3; ++ky) {
                const int yy = y + ky - 1;
                if (yy < 0 || yy >= Y) continue;
                for (int kx = 0; kx < 3; ++kx) {
                  const int xx = x + kx - 1;
                  if (xx < 0 || xx >= X) continue;
                  const T* inp =
                      in.sample(b) + ((static_cast<std::size_t>(zz) * Y + yy) * X + xx) * ci;
                  T* wk = local + ((static_cast<std::size_t>(kz) * 3 + ky) * 3 + kx) * ci * co;
                  for (int icd = 0; icd < ci; ++icd) {
                    const T val = inp[icd];
                    T* wrow = wk + static_cast<std::size_t>(icd) * co;
                    for (int oc = 0; oc < co; ++oc) wrow[oc] += val * dp[oc];
                  }
                }
              }
            }
          }
  }
  for (int blk = 0; blk < nblk; ++blk) {
    const T* local = partial.data() + static_cast<std::size_t>(blk) * wsize;
    for (std::size_t i = 0; i < wsize; ++i) dw[i] += local[i];
  }
}

// Two-pass batch statistics per channel over (B, spatial).
template <typename T>
void bn_stats(const Act<T>& x, T* mean, T* var) {
  const int B = x.B, C = x.C;
  const std::int64_t S = x.spatial();
  const double n = static_cast<double>(B) * S;
  const int nblk = grad_blocks(B);
  std::vector<double> partial(static_cast<std::size_t>(nblk) * C, 0.0);
#pragma omp parallel for schedule(static)
  for (int blk = 0; blk < nblk; ++blk) {
    double* local = partial.data() + static_cast<std::size_t>(blk) * C;
    const int b0 = static_cast<int>(static_cast<std::int64_t>(blk) * B / nblk);
    const int b1 = static_cast<int>(static_cast<std::int64_t>(blk + 1) * B / nblk);
    for (int b = b0; b < b1; ++b) {
      const T* p = x.sample(b);
      for (std::int64_t s = 0; s < S; ++s, p += C)
        for (int c = 0; c < C; ++c) local[c] += static_cast<double>(p[c]);
    }
  }
  std::vector<double> msum(C, 0.0);
  for (int blk = 0; blk < nblk; ++blk)
    for (int c = 0; c < C; ++c) msum[c] += partial[static_cast<std::size_t>(blk) * C + c];
  for (int c = 0; c < C; ++c) mean[c] = static_cast<T>(msum[c] / n);

  std::fill(partial.begin(), partial.end(), 0.0);
#pragma omp parallel for schedule(static)
  for (int blk = 0; blk < nblk; ++blk) {
    double* local = partial.data() + static_cast<std::size_t>(blk) * C;
    const int b0 = static_cast<int>(static_cast<std::int64_t>(blk) * B / nblk);
    const int b1 = static_cast<int>(static_cast<std::int64_t>(blk + 1) * B / nblk);
    for (int b = b0; b < b1; ++b) {
      const T* p = x.sample(b);
      for (std::int64_t s = 0; s < S; ++s, p += C)
        for (int c = 0; c < C; ++c) {
          const double d = static_cast<double>(p[c]) - static_cast<double>(mean[c]);
          local[c] += d * d;
        }
    }
  }
  std::vector<double> vsum(C, 0.0);
  for (int blk = 0; blk < nblk; ++blk)
    for (int c = 0; c < C; ++c) vsum[c] += partial[static_cast<std::size_t>(blk) * C + c];
  for (int c = 0; c < C; ++c) var[c] = static_cast<T>(vsum[c] / n);
}

template <typename T>
void bn_apply_relu(const Act<T>& x, Act<T>& y, const T* mean, const T* inv_std, const T* gamma,
                   const T* beta) {
  const int B = x.B, C = x.C;
  const std::int64_t S = x.spatial();
  y.resize(B, x.Z, x.Y, x.X, C);
#pragma omp parallel for schedule(static)
  for (int b = 0; b < B; ++b) {
    const T* p = x.sample(b);
    T* q = y.sample(b);
    for (std::int64_t s = 0; s < S; ++s, p += C, q += C)
      for (int c = 0; c < C; ++c) {
        const T val = gamma[c] * ((p[c] - mean[c]) * inv_std[c]) + beta[c];
        q[c] = val > T(0) ? val : T(0);
      }
  }
}

// Gradients through batch-norm + ReLU. `relu_out` is the forward output (its
// positive entries identify active units); `x` is the conv output the norm
// consumed. In batch-stats mode the mean/variance terms contribute; with
// fixed statistics (inference stats) only the affine path does.
template <typename T>
void bn_relu_backward(const Act<T>& dy_post, const Act<T>& relu_out, const Act<T>& x,
                      const T* mean, const T* inv_std, const T* gamma, bool batch_stats,
                      Act<T>& dx, T* dgamma, T* dbeta) {
  const int B = x.B, C = x.C;
  const std::int64_t S = x.spatial();
  const double n = static_cast<double>(B) * S;
  dx.resize(B, x.Z, x.Y, x.X, C);

  const int nblk = grad_blocks(B);
  std::vector<double> partial(static_cast<std::size_t>(nblk) * C * 2, 0.0);
#pragma omp parallel for schedule(static)
  for (int blk = 0; blk < nblk; ++blk) {
    double* sum_dy = partial.data() + static_cast<std::size_t>(blk) * C * 2;
    double* sum_dy_xhat = sum_dy + C;
    const int b0 = static_cast<int>(static_cast<std::int64_t>(blk) * B / nblk);
    const int b1 = static_cast<int>(static_cast<std::int64_t>(blk + 1) * B / nblk);
    for (int b = b0; b < b1; ++b) {
      const T* dyp = dy_post.sample(b);
      const T* rp = relu_out.sample(b);
      const T* xp = x.sample(b);
      for (std::int64_t s = 0; s < S; ++s, dyp += C, rp += C, xp += C)
        for (int c = 0; c < C; ++c) {
          const double dy = rp[c] > T(0) ? static_cast<double>(dyp[c]) : 0.0;
          const double xhat =
              (static_cast<double>(xp[c]) - static_cast<double>(mean[c])) * inv_std[c];
          sum_dy[c] += dy;
          sum_dy_xhat[c] += dy * xhat;
        }
    }
  }
  std::vector<double> sdy(C, 0.0), sdyx(C, 0.0);
  for (int blk = 0; blk < nblk; ++blk)
    for (int c = 0; c < C; ++c) {
      sdy[c] += partial[static_cast<std::size_t>(blk) * C * 2 + c];
      sdyx[c] += partial[static_cast<std::size_t>(blk) * C * 2 + C + c];
    }
  for (int c = 0; c < C; ++c) {
    dbeta[c] += static_cast<T>(sdy[c]);
    dgamma[c] += static_cast<T>(sdyx[c]);
  }

#pragma omp parallel for schedule(static)
  for (int b = 0; b < B; ++b) {
    const T* dyp = dy_post.sample(b);
    const T* rp = relu_out.sample(b);
    const T* xp = x.sample(b);
    T* dxp = dx.sample(b);
    for (std::int64_t s = 0; s < S; ++s, dyp += C, rp += C, xp += C, dxp += C)
      for (int c = 0; c < C; ++c) {
        const double dy = rp[c] > T(0) ? static_cast<double>(dyp[c]) : 0.0;
        if (batch_stats) {
          const double xhat =
              (static_cast<double>(xp[c]) - static_cast<double>(mean[c])) * inv_std[c];
          dxp[c] = static_cast<T>(static_cast<double>(gamma[c]) * inv_std[c] *
                                  (dy - sdy[c] / n - xhat * sdyx[c] / n));
        } else {
          dxp[c] = static_cast<T>(static_cast<double>(gamma[c]) * inv_std[c] * dy);
        }
      }
  }
}

template <typename T>
void maxpool2_forward(const Act<T>& in, Act<T>& out, std::vector<std::uint8_t>& argmax) {
  const int B = in.B, Z = in.Z / 2, Y = in.Y / 2, X = in.X / 2, C = in.C;
  out.resize(B, Z, Y, X, C);
  argmax.resize(out.v.size());
#pragma omp parallel for schedule(static)
  for (int b = 0; b < B; ++b)
    for (int z = 0; z < Z; ++z)
      for (int y = 0; y < Y; ++y)
        for (int x = 0; x < X; ++x) {
          T* outp = out.sample(b) + ((static_cast<std::size_t>(z) * Y + y) * X + x) * C;
          std::uint8_t* argp =
              argmax.data() + (out.per_sample() * b +
                               ((static_cast<std::size_t>(z) * Y + y) * X + x) * C);
          for (int c = 0; c < C; ++c) {
            T best{};
            std::uint8_t arg = 0;
            for (int d = 0; d < 8; ++d) {
              const int zz = z * 2 + (d >> 2), yy = y * 2 + ((d >> 1) & 1), xx = x * 2 + (d & 1);
              const T val =
                  in.sample(b)[((static_cast<std::size_t>(zz) * in.Y + yy) * in.X + xx) * C + c];
              if (d == 0 || val > best) {
                best = val;
                arg = static_cast<std::uint8_t>(d);
              }
            }
            outp[c] = best;
            argp[c] = arg;
          }
        }
}

template <typename T>
void maxpool2_backward(const Act<T>& dout, const std::vector<std::uint8_t>& argmax, Act<T>& din,
                       int in_z, int in_y, int in_x) {
  const int B = dout.B, Z = dout.Z, Y = dout.Y, X = dout.X, C = dout.C;
  din.resize(B, in_z, in_y, in_x, C);
  std::fill(din.v.begin(), din.v.end(), T(0));
#pragma omp parallel for schedule(static)
  for (int b = 0; b < B; ++b)
    for (int z = 0; z < Z; ++z)
      for (int y = 0; y < Y; ++y)
        for (int x = 0; x < X; ++x) {
          const std::size_t o = ((static_cast<std::size_t>(z) * Y + y) * X + x) * C;
          const T* dp = dout.sample(b) + o;
          const std::uint8_t* argp = argmax.data() + dout.per_sample() * b + o;
          for (int c = 0; c < C; ++c) {
            const int d = argp[c];
            const int zz = z * 2 + (d >> 2), yy = y * 2 + ((d >> 1) & 1), xx = x * 2 + (d & 1);
            din.sample(b)[((static_cast<std::size_t>(zz) * in_y + yy) * in_x + xx) * C + c] +=
                dp[c];
          }
        }
}

template <typename T>
void fc_forward(const T* in, T* out, int B, int n_in, int n_out, const T* w, const T* bias) {
#pragma omp parallel for schedule(static)
  for (int b = 0; b < B; ++b) {
    const T* x = in + static_cast<std::size_t>(b) * n_in;
    T* y = out + static_cast<std::size_t>(b) * n_out;
    for (int o = 0; o < n_out; ++o) {
      const T* wr = w + static_cast<std::size_t>(o) * n_in;
      T acc = bias[o];
      for (int i = 0; i < n_in; ++i) acc += wr[i] * x[i];
      y[o] = acc;
    }
  }
}

template <typename T>
void fc_backward_data(const T* dout, T* din, int B, int n_in, int n_out, const T* w) {
#pragma omp parallel for schedule(static)
  for (int b = 0; b < B; ++b) {
    const T* dy = dout + static_cast<std::size_t>(b) * n_out;
    T* dx = din + static_cast<std::size_t>(b) * n_in;
    for (int i = 0; i < n_in; ++i) dx[i] = T(0);
    for (int o = 0; o < n_out; ++o) {
      const T g = dy[o];
      const T* wr = w + static_cast<std::size_t>(o) * n_in;
      for (int i = 0; i < n_in; ++i) dx[i] += g * wr[i];
    }
  }
}

template <typename T>
void fc_backward_params(const T* in, const T* dout, T* dw, T* db, int B, int n_in, int n_out) {
#pragma omp parallel for schedule(static)
  for (int o = 0; o < n_out; ++o) {
    T* wr = dw + static_cast<std::size_t>(o) * n_in;
    T acc_b = T(0);
    for (int b = 0; b < B; ++b) {
      const T g = dout[static_cast<std::size_t>(b) * n_out + o];
      acc_b += g;
      const T* x = in + static_cast<std::size_t>(b) * n_in;
      for (int i = 0; i < n_in; ++i) wr[i] += g * x[i];
    }
    db[o] += acc_b;
  }
}

// Inverted dropout masks: 0 with probability `rate`, else 1/(1-rate). Drawn
// serially so mask streams depend only on the RNG state.
template <typename T>
void dropout_masks(Rng& rng, T* mask, std::size_t n, double rate) {
  const T keep_inv = static_cast<T>(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < n; ++i)
    mask[i] = rng.next_double() < rate ? T(0) : keep_inv;
}

}  // namespace nbv::net
