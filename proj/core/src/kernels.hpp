// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense kernels shared by the float forward/backward path and the 64-bit
// shadow evaluator used by gradcheck. All loops have a fixed accumulation
// order so forward evaluation is bit-deterministic.

#include <cmath>
#include <cstddef>
#include <cstring>
#include <vector>

namespace uc::kernels {

// C[M,N] += A[M,K] * B[K,N], saxpy form with N-tiling. The inner loop is a
// broadcast-FMA over contiguous rows, which the compiler vectorizes without
// reassociating any reduction.
template <class T>
void gemm(const T* A, const T* B, T* C, int M, int K, int N) {
  constexpr int kTile = 256;
  for (int n0 = 0; n0 < N; n0 += kTile) {
    const int n1 = (n0 + kTile < N) ? n0 + kTile : N;
    for (int m = 0; m < M; ++m) {
      T* __restrict c = C + static_cast<std::size_t>(m) * N;
      const T* __restrict a = A + static_cast<std::size_t>(m) * K;
      for (int k = 0; k < K; ++k) {
        const T av = a[k];
        const T* __restrict b = B + static_cast<std::size_t>(k) * N;
        for (int n = n0; n < n1; ++n) c[n] += av * b[n];
      }
    }
  }
}

struct ConvGeom {
  int cin, h, w;
  int cout, kh, kw;
  int stride, pad;
  int ho, wo;
  int patch() const { return cin * kh * kw; }
  int cols() const { return ho * wo; }
};

inline ConvGeom conv_geom(int cin, int h, int w, int cout, int kh, int kw, int stride, int pad) {
  ConvGeom g{cin, h, w, cout, kh, kw, stride, pad, 0, 0};
  g.ho = (h + 2 * pad - kh) / stride + 1;
  g.wo = (w + 2 * pad - kw) / stride + 1;
  return g;
}

// col[patch, cols]; zero-padded out-of-range taps.
template <class T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  const int N = g.cols();
  for (int c = 0; c < g.cin; ++c) {
    const T* xc = x + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        T* row = col + static_cast<std::size_t>((c * g.kh + ki) * g.kw + kj) * N;
        for (int oh = 0; oh < g.ho; ++oh) {
          const int ih = oh * g.stride - g.pad + ki;
          T* dst = row + static_cast<std::size_t>(oh) * g.wo;
          if (ih < 0 || ih >= g.h) {
            for (int ow = 0; ow < g.wo; ++ow) dst[ow] = T(0);
            continue;
          }
          const T* src = xc + static_cast<std::size_t>(ih) * g.w;
          for (int ow = 0; ow < g.wo; ++ow) {
            const int iw = ow * g.stride - g.pad + kj;
            dst[ow] = (iw >= 0 && iw < g.w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, const ConvGeom& g, T* x) {
  const int N = g.cols();
  for (int c = 0; c < g.cin; ++c) {
    T* xc = x + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const T* row = col + static_cast<std::size_t>((c * g.kh + ki) * g.kw + kj) * N;
        for (int oh = 0; oh < g.ho; ++oh) {
          const int ih = oh * g.stride - g.pad + ki;
          if (ih < 0 || ih >= g.h) continue;
          const T* src = row + static_cast<std::size_t>(oh) * g.wo;
          T* dst = xc + static_cast<std::size_t>(ih) * g.w;
          for (int ow = 0; ow < g.wo; ++ow) {
            const int iw = ow * g.stride - g.pad + kj;
            if (iw >= 0 && iw < g.w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

template <class T>
std::vector<T>& scratch(std::size_t n, int slot) {
  thread_local std::vector<T> bufs[4];
  auto& b = bufs[slot];
  if (b.size() < n) b.resize(n);
  return b;
}

// y[cout, ho*wo] = W[cout, patch] * col + bias
template <class T>
void conv2d_forward(const T* x, const T* w, const T* b, const ConvGeom& g, T* y) {
  const int K = g.patch();
  const int N = g.cols();
  auto& col = scratch<T>(static_cast<std::size_t>(K) * N, 0);
  im2col(x, g, col.data());
  for (int m = 0; m < g.cout; ++m) {
    T* row = y + static_cast<std::size_t>(m) * N;
    const T bv = b ? b[m] : T(0);
    for (int n = 0; n < N; ++n) row[n] = bv;
  }
  gemm(w, col.data(), y, g.cout, K, N);
}

// Backward: dx (optional), dw/db (optional) accumulated in place.
template <class T>
void conv2d_backward(const T* x, const T* w, const T* gy, const ConvGeom& g,
                     T* gx, T* gw, T* gb) {
  const int K = g.patch();
  const int N = g.cols();
  const int M = g.cout;
  if (gb) {
    for (int m = 0; m < M; ++m) {
      const T* row = gy + static_cast<std::size_t>(m) * N;
      T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
      int n = 0;
      for (; n + 4 <= N; n += 4) {
        s0 += row[n];
        s1 += row[n + 1];
        s2 += row[n + 2];
        s3 += row[n + 3];
      }
      T s = ((s0 + s1) + (s2 + s3));
      for (; n < N; ++n) s += row[n];
      gb[m] += s;
    }
  }
  if (gw) {
    auto& col = scratch<T>(static_cast<std::size_t>(K) * N, 0);
    im2col(x, g, col.data());
    auto& colT = scratch<T>(static_cast<std::size_t>(K) * N, 1);
    for (int k = 0; k < K; ++k) {
      const T* src = col.data() + static_cast<std::size_t>(k) * N;
      for (int n = 0; n < N; ++n) colT[static_cast<std::size_t>(n) * K + k] = src[n];
    }
    gemm(gy, colT.data(), gw, M, N, K);
  }
  if (gx) {
    auto& wT = scratch<T>(static_cast<std::size_t>(K) * M, 2);
    for (int m = 0; m < M; ++m) {
      for (int k = 0; k < K; ++k) wT[static_cast<std::size_t>(k) * M + m] = w[static_cast<std::size_t>(m) * K + k];
    }
    auto& gcol = scratch<T>(static_cast<std::size_t>(K) * N, 3);
    std::memset(gcol.data(), 0, static_cast<std::size_t>(K) * N * sizeof(T));
    gemm(wT.data(), gy, gcol.data(), K, M, N);
    col2im_add(gcol.data(), g, gx);
  }
}

template <class T>
void linear_forward(const T* x, const T* w, const T* b, int out, int in, T* y) {
  for (int o = 0; o < out; ++o) {
    const T* row = w + static_cast<std::size_t>(o) * in;
    T s = b ? b[o] : T(0);
    for (int i = 0; i < in; ++i) s += row[i] * x[i];
    y[o] = s;
  }
}

template <class T>
void linear_backward(const T* x, const T* w, const T* gy, int out, int in,
                     T* gx, T* gw, T* gb) {
  if (gb) {
    for (int o = 0; o < out; ++o) gb[o] += gy[o];
  }
  if (gw) {
    for (int o = 0; o < out; ++o) {
      T* row = gw + static_cast<std::size_t>(o) * in;
      const T g = gy[o];
      for (int i = 0; i < in; ++i) row[i] += g * x[i];
    }
  }
  if (gx) {
    for (int o = 0; o < out; ++o) {
      const T* row = w + static_cast<std::size_t>(o) * in;
      const T g = gy[o];
      for (int i = 0; i < in; ++i) gx[i] += g * row[i];
    }
  }
}

template <class T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <class T>
void silu_forward(const T* x, std::size_t n, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * sigmoid(x[i]);
}

template <class T>
void silu_backward(const T* x, const T* gy, std::size_t n, T* gx) {
  for (std::size_t i = 0; i < n; ++i) {
    const T s = sigmoid(x[i]);
    gx[i] += gy[i] * (s * (T(1) + x[i] * (T(1) - s)));
  }
}

inline constexpr double kNormEps = 1e-5;

// Per-channel mean/variance normalization with learned scale/shift.
template <class T>
void channel_norm_forward(const T* x, const T* gamma, const T* beta,
                          int c, int hw, T* y) {
  for (int ci = 0; ci < c; ++ci) {
    const T* xc = x + static_cast<std::size_t>(ci) * hw;
    T* yc = y + static_cast<std::size_t>(ci) * hw;
    T mean = 0;
    for (int i = 0; i < hw; ++i) mean += xc[i];
    mean /= T(hw);
    T var = 0;
    for (int i = 0; i < hw; ++i) {
      const T d = xc[i] - mean;
      var += d * d;
    }
    var /= T(hw);
    const T inv = T(1) / std::sqrt(var + T(kNormEps));
    const T g = gamma[ci], b = beta[ci];
    for (int i = 0; i < hw; ++i) yc[i] = (xc[i] - mean) * inv * g + b;
  }
}

template <class T>
void channel_norm_backward(const T* x, const T* gamma, const T* gy,
                           int c, int hw, T* gx, T* ggamma, T* gbeta) {
  for (int ci = 0; ci < c; ++ci) {
    const T* xc = x + static_cast<std::size_t>(ci) * hw;
    const T* gc = gy + static_cast<std::size_t>(ci) * hw;
    T mean = 0;
    for (int i = 0; i < hw; ++i) mean += xc[i];
    mean /= T(hw);
    T var = 0;
    for (int i = 0; i < hw; ++i) {
      const T d = xc[i] - mean;
      var += d * d;
    }
    var /= T(hw);
    const T inv = T(1) / std::sqrt(var + T(kNormEps));

    T sum_g = 0, sum_gx = 0;
    for (int i = 0; i < hw; ++i) {
      sum_g += gc[i];
      sum_gx += gc[i] * (xc[i] - mean) * inv;
    }
    if (gbeta) gbeta[ci] += sum_g;
    if (ggamma) ggamma[ci] += sum_gx;
    if (gx) {
      T* gxc = gx + static_cast<std::size_t>(ci) * hw;
      const T g = gamma[ci];
      const T mg = sum_g / T(hw);
      const T mgx = sum_gx / T(hw);
      for (int i = 0; i < hw; ++i) {
        const T xhat = (xc[i] - mean) * inv;
        gxc[i] += g * inv * (gc[i] - mg - xhat * mgx);
      }
    }
  }
}

template <class T>
void upsample2x_forward(const T* x, int c, int h, int w, T* y) {
  const int W2 = w * 2;
  for (int ci = 0; ci < c; ++ci) {
    const T* xc = x + static_cast<std::size_t>(ci) * h * w;
    T* yc = y + static_cast<std::size_t>(ci) * h * w * 4;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const T v = xc[i * w + j];
        T* d = yc + (2 * i) * W2 + 2 * j;
        d[0] = v;
        d[1] = v;
        d[W2] = v;
        d[W2 + 1] = v;
      }
    }
  }
}

template <class T>
void upsample2x_backward(const T* gy, int c, int h, int w, T* gx) {
  const int W2 = w * 2;
  for (int ci = 0; ci < c; ++ci) {
    const T* gc = gy + static_cast<std::size_t>(ci) * h * w * 4;
    T* xc = gx + static_cast<std::size_t>(ci) * h * w;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const T* s = gc + (2 * i) * W2 + 2 * j;
        xc[i * w + j] += (s[0] + s[1]) + (s[W2] + s[W2 + 1]);
      }
    }
  }
}

template <class T>
void avgpool2x_forward(const T* x, int c, int h, int w, T* y) {
  const int ho = h / 2, wo = w / 2;
  for (int ci = 0; ci < c; ++ci) {
    const T* xc = x + static_cast<std::size_t>(ci) * h * w;
    T* yc = y + static_cast<std::size_t>(ci) * ho * wo;
    for (int i = 0; i < ho; ++i) {
      for (int j = 0; j < wo; ++j) {
        const T* s = xc + (2 * i) * w + 2 * j;
        yc[i * wo + j] = ((s[0] + s[1]) + (s[w] + s[w + 1])) * T(0.25);
      }
    }
  }
}

template <class T>
void avgpool2x_backward(const T* gy, int c, int h, int w, T* gx) {
  const int ho = h / 2, wo = w / 2;
  for (int ci = 0; ci < c; ++ci) {
    const T* gc = gy + static_cast<std::size_t>(ci) * ho * wo;
    T* xc = gx + static_cast<std::size_t>(ci) * h * w;
    for (int i = 0; i < ho; ++i) {
      for (int j = 0; j < wo; ++j) {
        const T g = gc[i * wo + j] * T(0.25);
        T* d = xc + (2 * i) * w + 2 * j;
        d[0] += g;
        d[1] += g;
        d[w] += g;
        d[w + 1] += g;
      }
    }
  }
}

template <class T>
T mse_forward(const T* x, const T* y, std::size_t n) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T d = x[i] - y[i];
    s += d * d;
  }
  return s / T(n);
}

}  // namespace uc::kernels
