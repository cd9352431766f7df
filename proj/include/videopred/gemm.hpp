#pragma once

#include <cstdint>
#include <vector>

#include "videopred/tensor.hpp"

// Small dense kernels behind conv2d/dense. Row-major throughout. Loop
// structure is chosen so the inner loops are contiguous and auto-vectorize;
// all reductions run in a fixed order, so results are deterministic.

namespace vp::detail {

/// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn_acc(const T* __restrict A, const T* __restrict B, T* __restrict C, std::int64_t M,
                 std::int64_t K, std::int64_t N) {
  constexpr std::int64_t MR = 4;
  std::int64_t i = 0;
  for (; i + MR <= M; i += MR) {
    T* c0 = C + (i + 0) * N;
    T* c1 = C + (i + 1) * N;
    T* c2 = C + (i + 2) * N;
    T* c3 = C + (i + 3) * N;
    for (std::int64_t k = 0; k < K; ++k) {
      const T a0 = A[(i + 0) * K + k];
      const T a1 = A[(i + 1) * K + k];
      const T a2 = A[(i + 2) * K + k];
      const T a3 = A[(i + 3) * K + k];
      const T* b = B + k * N;
      for (std::int64_t j = 0; j < N; ++j) {
        const T bj = b[j];
        c0[j] += a0 * bj;
        c1[j] += a1 * bj;
        c2[j] += a2 * bj;
        c3[j] += a3 * bj;
      }
    }
  }
  for (; i < M; ++i) {
    T* c = C + i * N;
    for (std::int64_t k = 0; k < K; ++k) {
      const T a = A[i * K + k];
      const T* b = B + k * N;
      for (std::int64_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

/// C[M,N] += A[M,K] * B[N,K]^T  (dot products over contiguous K).
/// Accumulates in 16 explicit lanes per dot product so the reduction
/// vectorizes; the lane-combine order is fixed, keeping results
/// deterministic.
template <typename T>
void gemm_nt_acc(const T* __restrict A, const T* __restrict B, T* __restrict C, std::int64_t M,
                 std::int64_t K, std::int64_t N) {
  constexpr std::int64_t L = 16;
  constexpr std::int64_t MR = 4;
  const std::int64_t Ks = K - K % L;
  std::int64_t i = 0;
  for (; i + MR <= M; i += MR) {
    const T* a0 = A + (i + 0) * K;
    const T* a1 = A + (i + 1) * K;
    const T* a2 = A + (i + 2) * K;
    const T* a3 = A + (i + 3) * K;
    for (std::int64_t j = 0; j < N; ++j) {
      const T* b = B + j * K;
      T l0[L] = {}, l1[L] = {}, l2[L] = {}, l3[L] = {};
      for (std::int64_t k = 0; k < Ks; k += L) {
        for (std::int64_t t = 0; t < L; ++t) {
          const T bv = b[k + t];
          l0[t] += a0[k + t] * bv;
          l1[t] += a1[k + t] * bv;
          l2[t] += a2[k + t] * bv;
          l3[t] += a3[k + t] * bv;
        }
      }
      T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
      for (std::int64_t t = 0; t < L; ++t) {
        s0 += l0[t];
        s1 += l1[t];
        s2 += l2[t];
        s3 += l3[t];
      }
      for (std::int64_t k = Ks; k < K; ++k) {
        const T bv = b[k];
        s0 += a0[k] * bv;
        s1 += a1[k] * bv;
        s2 += a2[k] * bv;
        s3 += a3[k] * bv;
      }
      C[(i + 0) * N + j] += s0;
      C[(i + 1) * N + j] += s1;
      C[(i + 2) * N + j] += s2;
      C[(i + 3) * N + j] += s3;
    }
  }
  for (; i < M; ++i) {
    const T* a = A + i * K;
    for (std::int64_t j = 0; j < N; ++j) {
      const T* b = B + j * K;
      T lanes[L] = {};
      for (std::int64_t k = 0; k < Ks; k += L)
        for (std::int64_t t = 0; t < L; ++t) lanes[t] += a[k + t] * b[k + t];
      T s = 0;
      for (std::int64_t t = 0; t < L; ++t) s += lanes[t];
      for (std::int64_t k = Ks; k < K; ++k) s += a[k] * b[k];
      C[i * N + j] += s;
    }
  }
}

/// C[K,N] += A[M,K]^T * B[M,N]
template <typename T>
void gemm_tn_acc(const T* __restrict A, const T* __restrict B, T* __restrict C, std::int64_t M,
                 std::int64_t K, std::int64_t N) {
  for (std::int64_t m = 0; m < M; ++m) {
    const T* b = B + m * N;
    for (std::int64_t k = 0; k < K; ++k) {
      const T a = A[m * K + k];
      T* c = C + k * N;
      for (std::int64_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

/// Unrolls conv patches into a [C*k*k, Ho*Wo] column matrix (zero padding).
template <typename T>
void im2col(const T* img, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t k,
            std::int64_t stride, std::int64_t pad, std::int64_t Ho, std::int64_t Wo, T* col) {
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t ky = 0; ky < k; ++ky) {
      for (std::int64_t kx = 0; kx < k; ++kx) {
        T* dst = col + ((c * k + ky) * k + kx) * (Ho * Wo);
        for (std::int64_t oy = 0; oy < Ho; ++oy) {
          const std::int64_t iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) {
            for (std::int64_t ox = 0; ox < Wo; ++ox) dst[oy * Wo + ox] = T(0);
            continue;
          }
          const T* src = img + (c * H + iy) * W;
          const std::int64_t x0 = kx - pad;
          for (std::int64_t ox = 0; ox < Wo; ++ox) {
            const std::int64_t ix = ox * stride + x0;
            dst[oy * Wo + ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

/// Scatter-add of a column matrix back onto the image (adjoint of im2col).
template <typename T>
void col2im_acc(const T* col, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t k,
                std::int64_t stride, std::int64_t pad, std::int64_t Ho, std::int64_t Wo, T* img) {
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t ky = 0; ky < k; ++ky) {
      for (std::int64_t kx = 0; kx < k; ++kx) {
        const T* src = col + ((c * k + ky) * k + kx) * (Ho * Wo);
        for (std::int64_t oy = 0; oy < Ho; ++oy) {
          const std::int64_t iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          T* dst = img + (c * H + iy) * W;
          const std::int64_t x0 = kx - pad;
          for (std::int64_t ox = 0; ox < Wo; ++ox) {
            const std::int64_t ix = ox * stride + x0;
            if (ix >= 0 && ix < W) dst[ix] += src[oy * Wo + ox];
          }
        }
      }
    }
  }
}

/// Reused scratch buffer for im2col matrices (single-threaded training).
template <typename T>
std::vector<T>& col_scratch() {
  thread_local std::vector<T> buf;
  return buf;
}

}  // namespace vp::detail
