#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "videopred/gemm.hpp"
#include "videopred/graph.hpp"
#include "videopred/tensor.hpp"

// Differentiable operator set. Every op computes its forward result eagerly
// and, when the graph is recording and an input requires grad, appends one
// backward closure to the tape. Closures skip silently when no gradient
// reached their output (diagnostic branches).

namespace vp {

enum class Pad { kSame, kValid };

namespace ops {

// ---------------------------------------------------------------------------
// conv2d / dense
// ---------------------------------------------------------------------------

/// Cross-correlation of x[B,C,H,W] with w[F,C,k,k] plus bias[F].
/// Zero padding: p=(k-1)/2 for kSame, 0 for kValid. Odd k only.
template <typename T>
Tensor<T> conv2d(Graph<T>& g, Tensor<T> x, Tensor<T> w, Tensor<T> b,
                 std::int64_t stride, Pad pad = Pad::kSame) {
  check_shape(x.rank() == 4, "conv2d: input must be [B,C,H,W], got " + shape_str(x.shape()));
  check_shape(w.rank() == 4, "conv2d: weight must be [F,C,k,k], got " + shape_str(w.shape()));
  const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t F = w.dim(0), k = w.dim(2);
  check_shape(w.dim(1) == C, "conv2d: weight channels " + std::to_string(w.dim(1)) +
                                 " != input channels " + std::to_string(C));
  check_shape(w.dim(2) == w.dim(3), "conv2d: kernel must be square");
  check_shape(k % 2 == 1, "conv2d: kernel size must be odd, got " + std::to_string(k));
  check_shape(b.rank() == 1 && b.dim(0) == F, "conv2d: bias must be [F]");
  check_shape(stride >= 1, "conv2d: stride must be >= 1");

  const std::int64_t p = (pad == Pad::kSame) ? (k - 1) / 2 : 0;
  const std::int64_t Ho = (H + 2 * p - k) / stride + 1;
  const std::int64_t Wo = (W + 2 * p - k) / stride + 1;
  check_shape(Ho >= 1 && Wo >= 1, "conv2d: output would be empty");

  const std::int64_t K = C * k * k, Nsp = Ho * Wo;
  Tensor<T> out({B, F, Ho, Wo}, detail::track(g, {&x, &w, &b}));

  auto& col = detail::col_scratch<T>();
  col.resize(size_t(K * Nsp));
  for (std::int64_t bi = 0; bi < B; ++bi) {
    detail::im2col(x.data() + bi * C * H * W, C, H, W, k, stride, p, Ho, Wo, col.data());
    T* o = out.data() + bi * F * Nsp;
    for (std::int64_t f = 0; f < F; ++f)
      std::fill(o + f * Nsp, o + (f + 1) * Nsp, b.data()[f]);
    detail::gemm_nn_acc(w.data(), col.data(), o, F, K, Nsp);
  }
  out.check_finite("conv2d");

  if (out.requires_grad()) {
    g.record([x, w, b, out, B, C, H, W, F, k, stride, p, Ho, Wo, K, Nsp]() mutable {
      if (!out.has_grad()) return;
      auto& col = detail::col_scratch<T>();
      col.resize(size_t(K * Nsp));
      // For stride 1 the input gradient is a correlation of the output
      // gradient with the 180-degree-rotated weights (pad k-1-p), which runs
      // on the fast gather+gemm path instead of scatter col2im.
      std::vector<T> wrot;
      std::vector<T> dcol;
      if (x.requires_grad()) {
        if (stride == 1) {
          wrot.resize(size_t(C * F * k * k));
          for (std::int64_t f = 0; f < F; ++f)
            for (std::int64_t c = 0; c < C; ++c)
              for (std::int64_t ky = 0; ky < k; ++ky)
                for (std::int64_t kx = 0; kx < k; ++kx)
                  wrot[((c * F + f) * k + (k - 1 - ky)) * k + (k - 1 - kx)] =
                      w.data()[((f * C + c) * k + ky) * k + kx];
        } else {
          dcol.resize(size_t(K * Nsp));
        }
      }
      std::vector<T> colD;
      if (x.requires_grad() && stride == 1) colD.resize(size_t(F * k * k * H * W));
      std::vector<T> colT;
      const bool small_spatial = Nsp < 128;  // short dot products vectorize poorly
      if (w.requires_grad() && small_spatial) colT.resize(size_t(K * Nsp));
      for (std::int64_t bi = 0; bi < B; ++bi) {
        const T* dout = out.grad() + bi * F * Nsp;
        if (w.requires_grad()) {
          detail::im2col(x.data() + bi * C * H * W, C, H, W, k, stride, p, Ho, Wo, col.data());
          if (small_spatial) {
            for (std::int64_t kk = 0; kk < K; ++kk)
              for (std::int64_t j = 0; j < Nsp; ++j) colT[size_t(j * K + kk)] = col[size_t(kk * Nsp + j)];
            detail::gemm_nn_acc(dout, colT.data(), w.grad(), F, Nsp, K);
          } else {
            detail::gemm_nt_acc(dout, col.data(), w.grad(), F, Nsp, K);
          }
        }
        if (b.requires_grad()) {
          for (std::int64_t f = 0; f < F; ++f) {
            T s = 0;
            for (std::int64_t j = 0; j < Nsp; ++j) s += dout[f * Nsp + j];
            b.grad()[f] += s;
          }
        }
        if (x.requires_grad()) {
          if (stride == 1) {
            detail::im2col(dout, F, Ho, Wo, k, 1, k - 1 - p, H, W, colD.data());
            detail::gemm_nn_acc(wrot.data(), colD.data(), x.grad() + bi * C * H * W, C, F * k * k,
                                H * W);
          } else {
            std::fill(dcol.begin(), dcol.end(), T(0));
            detail::gemm_tn_acc(w.data(), dout, dcol.data(), F, K, Nsp);
            detail::col2im_acc(dcol.data(), C, H, W, k, stride, p, Ho, Wo,
                               x.grad() + bi * C * H * W);
          }
        }
      }
    });
  }
  return out;
}

/// Affine map: y[B,M] = x[B,N] * w[M,N]^T + b[M].
template <typename T>
Tensor<T> dense(Graph<T>& g, Tensor<T> x, Tensor<T> w, Tensor<T> b) {
  check_shape(x.rank() == 2, "dense: input must be [B,N], got " + shape_str(x.shape()));
  check_shape(w.rank() == 2, "dense: weight must be [M,N], got " + shape_str(w.shape()));
  const std::int64_t B = x.dim(0), N = x.dim(1), M = w.dim(0);
  check_shape(w.dim(1) == N, "dense: weight inner dim " + std::to_string(w.dim(1)) +
                                 " != input dim " + std::to_string(N));
  check_shape(b.rank() == 1 && b.dim(0) == M, "dense: bias must be [M]");

  Tensor<T> out({B, M}, detail::track(g, {&x, &w, &b}));
  for (std::int64_t bi = 0; bi < B; ++bi)
    for (std::int64_t m = 0; m < M; ++m) out.data()[bi * M + m] = b.data()[m];
  detail::gemm_nt_acc(x.data(), w.data(), out.data(), B, N, M);
  out.check_finite("dense");

  if (out.requires_grad()) {
    g.record([x, w, b, out, B, N, M]() mutable {
      if (!out.has_grad()) return;
      const T* dy = out.grad();
      if (x.requires_grad()) detail::gemm_nn_acc(dy, w.data(), x.grad(), B, M, N);
      if (w.requires_grad()) detail::gemm_tn_acc(dy, x.data(), w.grad(), B, M, N);
      if (b.requires_grad()) {
        for (std::int64_t bi = 0; bi < B; ++bi)
          for (std::int64_t m = 0; m < M; ++m) b.grad()[m] += dy[bi * M + m];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

namespace ew {

// Binary ops require identical shapes, except that either side may be a
// one-element tensor (scalar broadcast).
template <typename T>
void binary_check(const Tensor<T>& a, const Tensor<T>& b, const char* name) {
  if (a.numel() == 1 || b.numel() == 1) return;
  check_shape(same_shape(a, b), std::string(name) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

template <typename T>
Shape binary_shape(const Tensor<T>& a, const Tensor<T>& b) {
  return a.numel() == 1 ? b.shape() : a.shape();
}

}  // namespace ew

template <typename T>
Tensor<T> add(Graph<T>& g, Tensor<T> a, Tensor<T> b) {
  ew::binary_check(a, b, "add");
  Tensor<T> out(ew::binary_shape(a, b), detail::track(g, {&a, &b}));
  const std::int64_t n = out.numel();
  const bool sa = a.numel() == 1, sb = b.numel() == 1;
  for (std::int64_t i = 0; i < n; ++i)
    out.data()[i] = a.data()[sa ? 0 : i] + b.data()[sb ? 0 : i];
  if (out.requires_grad()) {
    g.record([a, b, out, n, sa, sb]() mutable {
      if (!out.has_grad()) return;
      const T* dy = out.grad();
      if (a.requires_grad()) {
        if (sa && n > 1) {
          T s = 0;
          for (std::int64_t i = 0; i < n; ++i) s += dy[i];
          a.grad()[0] += s;
        } else {
          for (std::int64_t i = 0; i < n; ++i) a.grad()[i] += dy[i];
        }
      }
      if (b.requires_grad()) {
        if (sb && n > 1) {
          T s = 0;
          for (std::int64_t i = 0; i < n; ++i) s += dy[i];
          b.grad()[0] += s;
        } else {
          for (std::int64_t i = 0; i < n; ++i) b.grad()[i] += dy[i];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(Graph<T>& g, Tensor<T> a, Tensor<T> b) {
  ew::binary_check(a, b, "sub");
  Tensor<T> out(ew::binary_shape(a, b), detail::track(g, {&a, &b}));
  const std::int64_t n = out.numel();
  const bool sa = a.numel() == 1, sb = b.numel() == 1;
  for (std::int64_t i = 0; i < n; ++i)
    out.data()[i] = a.data()[sa ? 0 : i] - b.data()[sb ? 0 : i];
  if (out.requires_grad()) {
    g.record([a, b, out, n, sa, sb]() mutable {
      if (!out.has_grad()) return;
      const T* dy = out.grad();
      if (a.requires_grad()) {
        if (sa && n > 1) {
          T s = 0;
          for (std::int64_t i = 0; i < n; ++i) s += dy[i];
          a.grad()[0] += s;
        } else {
          for (std::int64_t i = 0; i < n; ++i) a.grad()[i] += dy[i];
        }
      }
      if (b.requires_grad()) {
        if (sb && n > 1) {
          T s = 0;
          for (std::int64_t i = 0; i < n; ++i) s += dy[i];
          b.grad()[0] -= s;
        } else {
          for (std::int64_t i = 0; i < n; ++i) b.grad()[i] -= dy[i];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Graph<T>& g, Tensor<T> a, Tensor<T> b) {
  ew::binary_check(a, b, "mul");
  Tensor<T> out(ew::binary_shape(a, b), detail::track(g, {&a, &b}));
  const std::int64_t n = out.numel();
  const bool sa = a.numel() == 1, sb = b.numel() == 1;
  for (std::int64_t i = 0; i < n; ++i)
    out.data()[i] = a.data()[sa ? 0 : i] * b.data()[sb ? 0 : i];
  if (out.requires_grad()) {
    g.record([a, b, out, n, sa, sb]() mutable {
      if (!out.has_grad()) return;
      const T* dy = out.grad();
      if (a.requires_grad()) {
        if (sa && n > 1) {
          T s = 0;
          for (std::int64_t i = 0; i < n; ++i) s += dy[i] * b.data()[i];
          a.grad()[0] += s;
        } else {
          for (std::int64_t i = 0; i < n; ++i) a.grad()[i] += dy[i] * b.data()[sb ? 0 : i];
        }
      }
      if (b.requires_grad()) {
        if (sb && n > 1) {
          T s = 0;
          for (std::int64_t i = 0; i < n; ++i) s += dy[i] * a.data()[i];
          b.grad()[0] += s;
        } else {
          for (std::int64_t i = 0; i < n; ++i) b.grad()[i] += dy[i] * a.data()[sa ? 0 : i];
        }
      }
    });
  }
  return out;
}

/// Multiplication by a compile-time-known constant.
template <typename T>
Tensor<T> scale(Graph<T>& g, Tensor<T> x, T c) {
  Tensor<T> out(x.shape(), detail::track(g, {&x}));
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] * c;
  if (out.requires_grad()) {
    g.record([x, out, n, c]() mutable {
      if (!out.has_grad() || !x.requires_grad()) return;
      for (std::int64_t i = 0; i < n; ++i) x.grad()[i] += out.grad()[i] * c;
    });
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid(Graph<T>& g, Tensor<T> x) {
  Tensor<T> out(x.shape(), detail::track(g, {&x}));
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) out.data()[i] = sigmoid_scalar(x.data()[i]);
  if (out.requires_grad()) {
    g.record([x, out, n]() mutable {
      if (!out.has_grad() || !x.requires_grad()) return;
      for (std::int64_t i = 0; i < n; ++i) {
        const T y = out.data()[i];
        x.grad()[i] += out.grad()[i] * y * (T(1) - y);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> tanh(Graph<T>& g, Tensor<T> x) {
  Tensor<T> out(x.shape(), detail::track(g, {&x}));
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) out.data()[i] = tanh_scalar(x.data()[i]);
  if (out.requires_grad()) {
    g.record([x, out, n]() mutable {
      if (!out.has_grad() || !x.requires_grad()) return;
      for (std::int64_t i = 0; i < n; ++i) {
        const T y = out.data()[i];
        x.grad()[i] += out.grad()[i] * (T(1) - y * y);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(Graph<T>& g, Tensor<T> x) {
  Tensor<T> out(x.shape(), detail::track(g, {&x}));
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
  if (out.requires_grad()) {
    g.record([x, out, n]() mutable {
      if (!out.has_grad() || !x.requires_grad()) return;
      for (std::int64_t i = 0; i < n; ++i)
        if (x.data()[i] > T(0)) x.grad()[i] += out.grad()[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax / concat / slice
// ---------------------------------------------------------------------------

/// Numerically stabilized softmax along `axis` (max subtraction).
template <typename T>
Tensor<T> softmax_axis(Graph<T>& g, Tensor<T> x, int axis) {
  check_shape(axis >= 0 && axis < x.rank(),
              "softmax_axis: axis " + std::to_string(axis) + " out of range for " +
                  shape_str(x.shape()));
  std::int64_t outer = 1, inner = 1;
  const std::int64_t n = x.dim(axis);
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);

  Tensor<T> out(x.shape(), detail::track(g, {&x}));
  const T* xd = x.data();
  T* od = out.data();
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const std::int64_t base = o * n * inner + in;
      T mx = xd[base];
      for (std::int64_t i = 1; i < n; ++i) mx = std::max(mx, xd[base + i * inner]);
      T sum = 0;
      for (std::int64_t i = 0; i < n; ++i) {
        const T e = fast_exp(xd[base + i * inner] - mx);
        od[base + i * inner] = e;
        sum += e;
      }
      const T inv = T(1) / sum;
      for (std::int64_t i = 0; i < n; ++i) od[base + i * inner] *= inv;
    }
  }
  if (out.requires_grad()) {
    g.record([x, out, outer, n, inner]() mutable {
      if (!out.has_grad() || !x.requires_grad()) return;
      const T* y = out.data();
      const T* dy = out.grad();
      T* dx = x.grad();
      for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
          const std::int64_t base = o * n * inner + in;
          T dot = 0;
          for (std::int64_t i = 0; i < n; ++i) dot += dy[base + i * inner] * y[base + i * inner];
          for (std::int64_t i = 0; i < n; ++i) {
            const std::int64_t idx = base + i * inner;
            dx[idx] += y[idx] * (dy[idx] - dot);
          }
        }
      }
    });
  }
  return out;
}

/// Stacks b's channels after a's. Works for [B,C,H,W] (axis 1) and [B,N]
/// (axis 1); either side may have zero channels.
template <typename T>
Tensor<T> concat_channels(Graph<T>& g, Tensor<T> a, Tensor<T> b) {
  check_shape(a.rank() == b.rank() && a.rank() >= 2,
              "concat_channels: rank mismatch " + shape_str(a.shape()) + " vs " +
                  shape_str(b.shape()));
  check_shape(a.dim(0) == b.dim(0), "concat_channels: batch mismatch");
  for (int i = 2; i < a.rank(); ++i)
    check_shape(a.dim(i) == b.dim(i), "concat_channels: spatial mismatch " +
                                          shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::int64_t B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
  std::int64_t inner = 1;
  for (int i = 2; i < a.rank(); ++i) inner *= a.dim(i);

  Shape os = a.shape();
  os[1] = Ca + Cb;
  Tensor<T> out(os, detail::track(g, {&a, &b}));
  for (std::int64_t bi = 0; bi < B; ++bi) {
    std::copy(a.data() + bi * Ca * inner, a.data() + (bi + 1) * Ca * inner,
              out.data() + bi * (Ca + Cb) * inner);
    std::copy(b.data() + bi * Cb * inner, b.data() + (bi + 1) * Cb * inner,
              out.data() + (bi * (Ca + Cb) + Ca) * inner);
  }
  if (out.requires_grad()) {
    g.record([a, b, out, B, Ca, Cb, inner]() mutable {
      if (!out.has_grad()) return;
      const T* dy = out.grad();
      for (std::int64_t bi = 0; bi < B; ++bi) {
        if (a.requires_grad()) {
          T* da = a.grad() + bi * Ca * inner;
          const T* src = dy + bi * (Ca + Cb) * inner;
          for (std::int64_t i = 0; i < Ca * inner; ++i) da[i] += src[i];
        }
        if (b.requires_grad()) {
          T* db = b.grad() + bi * Cb * inner;
          const T* src = dy + (bi * (Ca + Cb) + Ca) * inner;
          for (std::int64_t i = 0; i < Cb * inner; ++i) db[i] += src[i];
        }
      }
    });
  }
  return out;
}

/// Channels [c0, c1) of x as a fresh tensor.
template <typename T>
Tensor<T> slice_channels(Graph<T>& g, Tensor<T> x, std::int64_t c0, std::int64_t c1) {
  check_shape(x.rank() >= 2, "slice_channels: need rank >= 2");
  check_shape(0 <= c0 && c0 <= c1 && c1 <= x.dim(1),
              "slice_channels: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                  ") invalid for " + shape_str(x.shape()));
  const std::int64_t B = x.dim(0), C = x.dim(1), Cs = c1 - c0;
  std::int64_t inner = 1;
  for (int i = 2; i < x.rank(); ++i) inner *= x.dim(i);

  Shape os = x.shape();
  os[1] = Cs;
  Tensor<T> out(os, detail::track(g, {&x}));
  for (std::int64_t bi = 0; bi < B; ++bi)
    std::copy(x.data() + (bi * C + c0) * inner, x.data() + (bi * C + c1) * inner,
              out.data() + bi * Cs * inner);
  if (out.requires_grad()) {
    g.record([x, out, B, C, Cs, c0, inner]() mutable {
      if (!out.has_grad() || !x.requires_grad()) return;
      const T* dy = out.grad();
      for (std::int64_t bi = 0; bi < B; ++bi) {
        T* dx = x.grad() + (bi * C + c0) * inner;
        const T* src = dy + bi * Cs * inner;
        for (std::int64_t i = 0; i < Cs * inner; ++i) dx[i] += src[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Resizing / tiling / reductions
// ---------------------------------------------------------------------------

/// Bilinear 2x upsampling with corner alignment: output pixel i samples input
/// coordinate i*(n-1)/(2n-1). A constant image stays constant.
template <typename T>
Tensor<T> upsample2x(Graph<T>& g, Tensor<T> x) {
  check_shape(x.rank() == 4, "upsample2x: input must be [B,C,H,W]");
  const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t Ho = 2 * H, Wo = 2 * W;

  // Per-axis sample positions (index + weight of the right neighbor).
  auto make_map = [](std::int64_t n, std::int64_t no, std::vector<std::int64_t>& idx,
                     std::vector<T>& frac) {
    idx.resize(size_t(no));
    frac.resize(size_t(no));
    for (std::int64_t i = 0; i < no; ++i) {
      const T pos = (n == 1 || no == 1) ? T(0) : T(i) * T(n - 1) / T(no - 1);
      std::int64_t i0 = std::int64_t(std::floor(pos));
      if (i0 > n - 2) i0 = n - 2;
      if (i0 < 0) i0 = 0;
      idx[size_t(i)] = i0;
      frac[size_t(i)] = n == 1 ? T(0) : pos - T(i0);
    }
  };
  std::vector<std::int64_t> yi, xi;
  std::vector<T> yf, xf;
  make_map(H, Ho, yi, yf);
  make_map(W, Wo, xi, xf);

  Tensor<T> out({B, C, Ho, Wo}, detail::track(g, {&x}));
  for (std::int64_t bc = 0; bc < B * C; ++bc) {
    const T* src = x.data() + bc * H * W;
    T* dst = out.data() + bc * Ho * Wo;
    for (std::int64_t oy = 0; oy < Ho; ++oy) {
      const std::int64_t y0 = yi[size_t(oy)];
      const T fy = yf[size_t(oy)];
      const T* r0 = src + y0 * W;
      const T* r1 = src + std::min(y0 + 1, H - 1) * W;
      for (std::int64_t ox = 0; ox < Wo; ++ox) {
        const std::int64_t x0 = xi[size_t(ox)];
        const T fx = xf[size_t(ox)];
        const std::int64_t x1 = std::min(x0 + 1, W - 1);
        dst[oy * Wo + ox] = (T(1) - fy) * ((T(1) - fx) * r0[x0] + fx * r0[x1]) +
                            fy * ((T(1) - fx) * r1[x0] + fx * r1[x1]);
      }
    }
  }
  if (out.requires_grad()) {
    g.record([x, out, B, C, H, W, Ho, Wo, yi, xi, yf, xf]() mutable {
      if (!out.has_grad() || !x.requires_grad()) return;
      for (std::int64_t bc = 0; bc < B * C; ++bc) {
        T* dsrc = x.grad() + bc * H * W;
        const T* dy = out.grad() + bc * Ho * Wo;
        for (std::int64_t oy = 0; oy < Ho; ++oy) {
          const std::int64_t y0 = yi[size_t(oy)], y1 = std::min(y0 + 1, H - 1);
          const T fy = yf[size_t(oy)];
          for (std::int64_t ox = 0; ox < Wo; ++ox) {
            const std::int64_t x0 = xi[size_t(ox)], x1 = std::min(x0 + 1, W - 1);
            const T fx = xf[size_t(ox)];
            const T gv = dy[oy * Wo + ox];
            dsrc[y0 * W + x0] += gv * (T(1) - fy) * (T(1) - fx);
            dsrc[y0 * W + x1] += gv * (T(1) - fy) * fx;
            dsrc[y1 * W + x0] += gv * fy * (T(1) - fx);
            dsrc[y1 * W + x1] += gv * fy * fx;
          }
        }
      }
    });
  }
  return out;
}

/// Tiles a [B,D] vector into a [B,D,h,w] response map.
template <typename T>
Tensor<T> tile_spatial(Graph<T>& g, Tensor<T> v, std::int64_t h, std::int64_t w) {
  check_shape(v.rank() == 2, "tile_spatial: input must be [B,D]");
  const std::int64_t B = v.dim(0), D = v.dim(1);
  Tensor<T> out({B, D, h, w}, detail::track(g, {&v}));
  for (std::int64_t bd = 0; bd < B * D; ++bd)
    std::fill(out.data() + bd * h * w, out.data() + (bd + 1) * h * w, v.data()[bd]);
  if (out.requires_grad()) {
    g.record([v, out, B, D, h, w]() mutable {
      if (!out.has_grad() || !v.requires_grad()) return;
      for (std::int64_t bd = 0; bd < B * D; ++bd) {
        T s = 0;
        const T* dy = out.grad() + bd * h * w;
        for (std::int64_t i = 0; i < h * w; ++i) s += dy[i];
        v.grad()[bd] += s;
      }
    });
  }
  return out;
}

/// Sum of all elements, as a scalar tensor.
template <typename T>
Tensor<T> sum_all(Graph<T>& g, Tensor<T> x) {
  Tensor<T> out(Shape{}, detail::track(g, {&x}));
  T s = 0;
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) s += x.data()[i];
  out.data()[0] = s;
  if (out.requires_grad()) {
    g.record([x, out, n]() mutable {
      if (!out.has_grad() || !x.requires_grad()) return;
      const T gv = out.grad()[0];
      for (std::int64_t i = 0; i < n; ++i) x.grad()[i] += gv;
    });
  }
  return out;
}

/// Mean squared error between two same-shape tensors, as a scalar.
template <typename T>
Tensor<T> mse(Graph<T>& g, Tensor<T> pred, Tensor<T> target) {
  check_shape(same_shape(pred, target), "mse: shape mismatch " + shape_str(pred.shape()) +
                                            " vs " + shape_str(target.shape()));
  const std::int64_t n = pred.numel();
  check_shape(n > 0, "mse: empty tensors");
  Tensor<T> out(Shape{}, detail::track(g, {&pred, &target}));
  T s = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const T d = pred.data()[i] - target.data()[i];
    s += d * d;
  }
  out.data()[0] = s / T(n);
  if (out.requires_grad()) {
    g.record([pred, target, out, n]() mutable {
      if (!out.has_grad()) return;
      const T c = out.grad()[0] * T(2) / T(n);
      if (pred.requires_grad()) {
        for (std::int64_t i = 0; i < n; ++i)
          pred.grad()[i] += c * (pred.data()[i] - target.data()[i]);
      }
      if (target.requires_grad()) {
        for (std::int64_t i = 0; i < n; ++i)
          target.grad()[i] -= c * (pred.data()[i] - target.data()[i]);
      }
    });
  }
  return out;
}

}  // namespace ops
}  // namespace vp
