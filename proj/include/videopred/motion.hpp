#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "videopred/ops.hpp"

// Pixel-advection operators and the mask compositor. Each new frame is built
#include <type_traits>
// by transporting pixels of the previous frame under predicted motion and
// blending the candidates with a per-pixel convex mask, never by synthesizing
// the scene from scratch.

namespace vp {

/// Per-pixel advection kernels: values[B, ks, ks, H, W], each (b,:,:,y,x)
/// slice is a distribution over the ks*ks neighborhood (ks = 2*extent+1).
template <typename T>
struct KernelMap {
  Tensor<T> values;

  std::int64_t kernel_size() const { return values.dim(1); }

  void validate(double tol = 1e-3) const {
    const std::int64_t B = values.dim(0), ks = values.dim(1), H = values.dim(3),
                       W = values.dim(4);
    check_shape(values.dim(2) == ks, "KernelMap: kernel axes must match");
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t y = 0; y < H; ++y)
        for (std::int64_t x = 0; x < W; ++x) {
          T s = 0;
          for (std::int64_t t = 0; t < ks * ks; ++t) {
            const T v = values.data()[((b * ks * ks + t) * H + y) * W + x];
            check(v >= T(0), "KernelMap: negative kernel entry");
            s += v;
          }
          check(std::abs(double(s) - 1.0) <= tol,
                "KernelMap: kernel at pixel does not sum to 1 (sum=" + std::to_string(double(s)) +
                    ")");
        }
  }
};

/// N shared advection kernels: values[B, N, ks, ks], one set per sample.
template <typename T>
struct KernelSet {
  Tensor<T> values;

  std::int64_t count() const { return values.dim(1); }
  std::int64_t kernel_size() const { return values.dim(2); }

  void validate(double tol = 1e-3) const {
    const std::int64_t BN = values.dim(0) * values.dim(1);
    const std::int64_t kk = values.dim(2) * values.dim(3);
    for (std::int64_t i = 0; i < BN; ++i) {
      T s = 0;
      for (std::int64_t t = 0; t < kk; ++t) {
        const T v = values.data()[i * kk + t];
        check(v >= T(0), "KernelSet: negative kernel entry");
        s += v;
      }
      check(std::abs(double(s) - 1.0) <= tol, "KernelSet: kernel does not sum to 1");
    }
  }
};

/// N affine maps from output to source coordinates, values[B, N, 2, 3],
/// in normalized [-1,1] corner-aligned coordinates; row 0 produces x_src,
/// row 1 y_src; identity is [[1,0,0],[0,1,0]].
template <typename T>
struct AffineSet {
  Tensor<T> values;

  std::int64_t count() const { return values.dim(1); }
};

/// Post-softmax compositing mask, values[B, C, H, W]; channel 0 weights the
/// previous frame (background), channels 1..N the transforms, and the last
/// channel the generated image when enabled. Channels sum to 1 per pixel.
template <typename T>
struct CompositeMask {
  Tensor<T> values;

  std::int64_t channels() const { return values.dim(1); }
};

namespace ops {

namespace detail_motion {
inline std::int64_t clampi(std::int64_t v, std::int64_t lo, std::int64_t hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}
}  // namespace detail_motion

/// DNA: each output pixel is the expectation of the previous frame over its
/// local neighborhood under that pixel's own kernel. Boundary pixels use
/// edge replication, so constants are preserved.
template <typename T>
Tensor<T> apply_dna(Graph<T>& g, Tensor<T> prev, KernelMap<T> kernels) {
  using detail_motion::clampi;
  const Tensor<T>& m = kernels.values;
  check_shape(prev.rank() == 4, "apply_dna: prev must be [B,C,H,W]");
  check_shape(m.rank() == 5, "apply_dna: kernels must be [B,ks,ks,H,W]");
  const std::int64_t B = prev.dim(0), C = prev.dim(1), H = prev.dim(2), W = prev.dim(3);
  const std::int64_t ks = m.dim(1);
  check_shape(m.dim(0) == B && m.dim(3) == H && m.dim(4) == W,
              "apply_dna: kernel map " + shape_str(m.shape()) + " does not match image " +
                  shape_str(prev.shape()));
  check_shape(ks % 2 == 1 && ks <= std::min(H, W), "apply_dna: bad kernel size");
  if (debug_checks()) kernels.validate();
  const std::int64_t r = (ks - 1) / 2;

  Tensor<T> out({B, C, H, W}, detail::track(g, {&prev, &m}));
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t c = 0; c < C; ++c) {
      const T* src = prev.data() + (b * C + c) * H * W;
      T* dst = out.data() + (b * C + c) * H * W;
      for (std::int64_t y = 0; y < H; ++y)
        for (std::int64_t x = 0; x < W; ++x) {
          T acc = 0;
          for (std::int64_t dy = -r; dy <= r; ++dy) {
            const std::int64_t sy = clampi(y - dy, 0, H - 1);
            for (std::int64_t dx = -r; dx <= r; ++dx) {
              const std::int64_t sx = clampi(x - dx, 0, W - 1);
              const T wgt = m.data()[(((b * ks + (dy + r)) * ks + (dx + r)) * H + y) * W + x];
              acc += wgt * src[sy * W + sx];
            }
          }
          dst[y * W + x] = acc;
        }
    }
  }
  if (out.requires_grad()) {
    Tensor<T> mt = m;
    g.record([prev, mt, out, B, C, H, W, ks, r]() mutable {
      using detail_motion::clampi;
      if (!out.has_grad()) return;
      for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t c = 0; c < C; ++c) {
          const T* src = prev.data() + (b * C + c) * H * W;
          const T* dy_ = out.grad() + (b * C + c) * H * W;
          T* dsrc = prev.requires_grad() ? prev.grad() + (b * C + c) * H * W : nullptr;
          for (std::int64_t y = 0; y < H; ++y)
            for (std::int64_t x = 0; x < W; ++x) {
              const T gv = dy_[y * W + x];
              if (gv == T(0)) continue;
              for (std::int64_t dy = -r; dy <= r; ++dy) {
                const std::int64_t sy = clampi(y - dy, 0, H - 1);
                for (std::int64_t dx = -r; dx <= r; ++dx) {
                  const std::int64_t sx = clampi(x - dx, 0, W - 1);
                  const std::int64_t mi =
                      (((b * ks + (dy + r)) * ks + (dx + r)) * H + y) * W + x;
                  if (dsrc) dsrc[sy * W + sx] += gv * mt.data()[mi];
                  if (mt.requires_grad()) mt.grad()[mi] += gv * src[sy * W + sx];
                }
              }
            }
        }
      }
    });
  }
  return out;
}

/// CDNA: N kernels per sample, each convolved (tied weights) over the whole
/// previous frame, producing N candidate images. Sample b uses kernel set b.
template <typename T>
Tensor<T> apply_cdna(Graph<T>& g, Tensor<T> prev, KernelSet<T> kernels) {
  using detail_motion::clampi;
  const Tensor<T>& m = kernels.values;
  check_shape(prev.rank() == 4, "apply_cdna: prev must be [B,C,H,W]");
  check_shape(m.rank() == 4, "apply_cdna: kernels must be [B,N,ks,ks]");
  const std::int64_t B = prev.dim(0), C = prev.dim(1), H = prev.dim(2), W = prev.dim(3);
  const std::int64_t N = m.dim(1), ks = m.dim(2);
  check_shape(m.dim(0) == B, "apply_cdna: batch mismatch");
  check_shape(ks % 2 == 1 && ks == m.dim(3) && ks <= std::min(H, W),
              "apply_cdna: bad kernel size");
  if (debug_checks()) kernels.validate();
  const std::int64_t r = (ks - 1) / 2;

  Tensor<T> out({B, N, C, H, W}, detail::track(g, {&prev, &m}));
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t n = 0; n < N; ++n) {
      const T* ker = m.data() + (b * N + n) * ks * ks;
      for (std::int64_t c = 0; c < C; ++c) {
        const T* src = prev.data() + (b * C + c) * H * W;
        T* dst = out.data() + (((b * N + n) * C) + c) * H * W;
        for (std::int64_t y = 0; y < H; ++y)
          for (std::int64_t x = 0; x < W; ++x) {
            T acc = 0;
            for (std::int64_t dy = -r; dy <= r; ++dy) {
              const std::int64_t sy = clampi(y - dy, 0, H - 1);
              for (std::int64_t dx = -r; dx <= r; ++dx) {
                const std::int64_t sx = clampi(x - dx, 0, W - 1);
                acc += ker[(dy + r) * ks + (dx + r)] * src[sy * W + sx];
              }
            }
            dst[y * W + x] = acc;
          }
      }
    }
  }
  if (out.requires_grad()) {
    Tensor<T> mt = m;
    g.record([prev, mt, out, B, N, C, H, W, ks, r]() mutable {
      using detail_motion::clampi;
      if (!out.has_grad()) return;
      for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t n = 0; n < N; ++n) {
          const T* ker = mt.data() + (b * N + n) * ks * ks;
          T* dker = mt.requires_grad() ? mt.grad() + (b * N + n) * ks * ks : nullptr;
          for (std::int64_t c = 0; c < C; ++c) {
            const T* src = prev.data() + (b * C + c) * H * W;
            const T* dout = out.grad() + (((b * N + n) * C) + c) * H * W;
            T* dsrc = prev.requires_grad() ? prev.grad() + (b * C + c) * H * W : nullptr;
            for (std::int64_t y = 0; y < H; ++y)
              for (std::int64_t x = 0; x < W; ++x) {
                const T gv = dout[y * W + x];
                if (gv == T(0)) continue;
                for (std::int64_t dy = -r; dy <= r; ++dy) {
                  const std::int64_t sy = clampi(y - dy, 0, H - 1);
                  for (std::int64_t dx = -r; dx <= r; ++dx) {
                    const std::int64_t sx = clampi(x - dx, 0, W - 1);
                    if (dsrc) dsrc[sy * W + sx] += gv * ker[(dy + r) * ks + (dx + r)];
                    if (dker) dker[(dy + r) * ks + (dx + r)] += gv * src[sy * W + sx];
                  }
                }
              }
          }
        }
      }
    });
  }
  return out;
}

/// STP: N affine warps applied with a bilinear kernel. Source coordinates
/// outside the image contribute nothing (their sampling weights vanish).
///
/// Coordinates are computed in a centered form so the identity transform
/// reproduces the input bit-exactly on the integer grid.
template <typename T>
Tensor<T> apply_stp(Graph<T>& g, Tensor<T> prev, AffineSet<T> affines) {
  const Tensor<T>& M = affines.values;
  check_shape(prev.rank() == 4, "apply_stp: prev must be [B,C,H,W]");
  check_shape(M.rank() == 4 && M.dim(2) == 2 && M.dim(3) == 3,
              "apply_stp: affines must be [B,N,2,3]");
  const std::int64_t B = prev.dim(0), C = prev.dim(1), H = prev.dim(2), W = prev.dim(3);
  const std::int64_t N = M.dim(1);
  check_shape(M.dim(0) == B, "apply_stp: batch mismatch");
  check(M.all_finite(), "apply_stp: non-finite affine parameters");

  const T cx = T(W - 1) / T(2), cy = T(H - 1) / T(2);
  const T rx = cy == T(0) ? T(0) : cx / cy;  // x-units per y-unit
  const T ry = cx == T(0) ? T(0) : cy / cx;

  Tensor<T> out({B, N, C, H, W}, detail::track(g, {&prev, &M}));
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t n = 0; n < N; ++n) {
      const T* A = M.data() + (b * N + n) * 6;
      for (std::int64_t y = 0; y < H; ++y) {
        const T yc = T(y) - cy;
        for (std::int64_t x = 0; x < W; ++x) {
          const T xc = T(x) - cx;
          // (xs,ys): source pixel coordinates; algebraically equal to
          // denormalizing A * (xn,yn,1) but exact on the identity.
          const T xs = A[0] * xc + A[1] * rx * yc + (A[2] + T(1)) * cx;
          const T ys = A[3] * ry * xc + A[4] * yc + (A[5] + T(1)) * cy;
          const std::int64_t x0 = std::int64_t(std::floor(xs));
          const std::int64_t y0 = std::int64_t(std::floor(ys));
          const T fx = xs - T(x0), fy = ys - T(y0);
          const bool x0i = x0 >= 0 && x0 < W, x1i = x0 + 1 >= 0 && x0 + 1 < W;
          const bool y0i = y0 >= 0 && y0 < H, y1i = y0 + 1 >= 0 && y0 + 1 < H;
          for (std::int64_t c = 0; c < C; ++c) {
            const T* src = prev.data() + (b * C + c) * H * W;
            T v = 0;
            if (y0i) {
              if (x0i) v += (T(1) - fy) * (T(1) - fx) * src[y0 * W + x0];
              if (x1i) v += (T(1) - fy) * fx * src[y0 * W + x0 + 1];
            }
            if (y1i) {
              if (x0i) v += fy * (T(1) - fx) * src[(y0 + 1) * W + x0];
              if (x1i) v += fy * fx * src[(y0 + 1) * W + x0 + 1];
            }
            out.data()[((((b * N + n) * C) + c) * H + y) * W + x] = v;
          }
        }
      }
    }
  }
  if (out.requires_grad()) {
    Tensor<T> Mt = M;
    g.record([prev, Mt, out, B, N, C, H, W, cx, cy, rx, ry]() mutable {
      if (!out.has_grad()) return;
      for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t n = 0; n < N; ++n) {
          const T* A = Mt.data() + (b * N + n) * 6;
          T* dA = Mt.requires_grad() ? Mt.grad() + (b * N + n) * 6 : nullptr;
          for (std::int64_t y = 0; y < H; ++y) {
            const T yc = T(y) - cy;
            for (std::int64_t x = 0; x < W; ++x) {
              const T xc = T(x) - cx;
              const T xs = A[0] * xc + A[1] * rx * yc + (A[2] + T(1)) * cx;
              const T ys = A[3] * ry * xc + A[4] * yc + (A[5] + T(1)) * cy;
              const std::int64_t x0 = std::int64_t(std::floor(xs));
              const std::int64_t y0 = std::int64_t(std::floor(ys));
              const T fx = xs - T(x0), fy = ys - T(y0);
              const bool x0i = x0 >= 0 && x0 < W, x1i = x0 + 1 >= 0 && x0 + 1 < W;
              const bool y0i = y0 >= 0 && y0 < H, y1i = y0 + 1 >= 0 && y0 + 1 < H;
              T dxs = 0, dys = 0;
              for (std::int64_t c = 0; c < C; ++c) {
                const T gv = out.grad()[((((b * N + n) * C) + c) * H + y) * W + x];
                if (gv == T(0)) continue;
                const T* src = prev.data() + (b * C + c) * H * W;
                T* dsrc = prev.requires_grad() ? prev.grad() + (b * C + c) * H * W : nullptr;
                T v00 = 0, v01 = 0, v10 = 0, v11 = 0;
                if (y0i && x0i) v00 = src[y0 * W + x0];
                if (y0i && x1i) v01 = src[y0 * W + x0 + 1];
                if (y1i && x0i) v10 = src[(y0 + 1) * W + x0];
                if (y1i && x1i) v11 = src[(y0 + 1) * W + x0 + 1];
                if (dsrc) {
                  if (y0i && x0i) dsrc[y0 * W + x0] += gv * (T(1) - fy) * (T(1) - fx);
                  if (y0i && x1i) dsrc[y0 * W + x0 + 1] += gv * (T(1) - fy) * fx;
                  if (y1i && x0i) dsrc[(y0 + 1) * W + x0] += gv * fy * (T(1) - fx);
                  if (y1i && x1i) dsrc[(y0 + 1) * W + x0 + 1] += gv * fy * fx;
                }
                dxs += gv * ((T(1) - fy) * (v01 - v00) + fy * (v11 - v10));
                dys += gv * ((T(1) - fx) * (v10 - v00) + fx * (v11 - v01));
              }
              if (dA) {
                dA[0] += dxs * xc;
                dA[1] += dxs * rx * yc;
                dA[2] += dxs * cx;
                dA[3] += dys * ry * xc;
                dA[4] += dys * yc;
                dA[5] += dys * cy;
              }
            }
          }
        }
      }
    });
  }
  return out;
}

/// DNA kernel normalization: relu then divide by the per-pixel sum
/// (epsilon-guarded). Input raw[B,ks*ks,H,W]; output a valid KernelMap.
template <typename T>
KernelMap<T> normalize_dna(Graph<T>& g, Tensor<T> raw, std::int64_t ks) {
  check_shape(raw.rank() == 4 && raw.dim(1) == ks * ks,
              "normalize_dna: raw must be [B," + std::to_string(ks * ks) + ",H,W], got " +
                  shape_str(raw.shape()));
  const std::int64_t B = raw.dim(0), K = ks * ks, H = raw.dim(2), W = raw.dim(3);
  constexpr T kEps = T(1e-12);

  Tensor<T> out({B, K, H, W}, detail::track(g, {&raw}));
  const std::int64_t hw = H * W;
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t p = 0; p < hw; ++p) {
      T s = 0;
      for (std::int64_t k = 0; k < K; ++k) {
        const T r = raw.data()[(b * K + k) * hw + p];
        const T a = (r > T(0) ? r : T(0)) + kEps;
        out.data()[(b * K + k) * hw + p] = a;
        s += a;
      }
      const T inv = T(1) / s;
      for (std::int64_t k = 0; k < K; ++k) out.data()[(b * K + k) * hw + p] *= inv;
    }
  }
  if (out.requires_grad()) {
    g.record([raw, out, B, K, hw, kEps]() mutable {
      if (!out.has_grad() || !raw.requires_grad()) return;
      for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t p = 0; p < hw; ++p) {
          T s = 0, dot = 0;
          for (std::int64_t k = 0; k < K; ++k) {
            const T r = raw.data()[(b * K + k) * hw + p];
            s += (r > T(0) ? r : T(0)) + kEps;
            dot += out.grad()[(b * K + k) * hw + p] * out.data()[(b * K + k) * hw + p];
          }
          const T inv = T(1) / s;
          for (std::int64_t k = 0; k < K; ++k) {
            const std::int64_t idx = (b * K + k) * hw + p;
            if (raw.data()[idx] > T(0))
              raw.grad()[idx] += (out.grad()[idx] - dot) * inv;
          }
        }
      }
    });
  }
  return KernelMap<T>{out.reshaped({B, ks, ks, H, W})};
}

/// CDNA kernel normalization: spatial softmax over each kernel's ks*ks
/// entries. Input raw[B,N,ks*ks]; output a valid KernelSet.
template <typename T>
KernelSet<T> normalize_cdna(Graph<T>& g, Tensor<T> raw, std::int64_t ks) {
  check_shape(raw.rank() == 3 && raw.dim(2) == ks * ks,
              "normalize_cdna: raw must be [B,N," + std::to_string(ks * ks) + "], got " +
                  shape_str(raw.shape()));
  Tensor<T> sm = softmax_axis(g, raw, 2);
  return KernelSet<T>{sm.reshaped({raw.dim(0), raw.dim(1), ks, ks})};
}

/// Blends candidate images [prev, transformed 1..N, generated?] with a
/// channel-softmax of mask_logits. Returns the composited image and the
/// post-softmax mask. The output at each pixel is a convex combination of
/// the candidates there.
template <typename T>
struct CompositeResult {
  Tensor<T> image;
  CompositeMask<T> mask;
};

template <typename T>
CompositeResult<T> composite(Graph<T>& g, Tensor<T> prev, Tensor<T> transformed,
                             std::type_identity_t<std::optional<Tensor<T>>> generated,
                             Tensor<T> mask_logits) {
  check_shape(prev.rank() == 4, "composite: prev must be [B,C,H,W]");
  check_shape(transformed.rank() == 5, "composite: transformed must be [B,N,C,H,W]");
  const std::int64_t B = prev.dim(0), C = prev.dim(1), H = prev.dim(2), W = prev.dim(3);
  const std::int64_t N = transformed.dim(1);
  check_shape(transformed.dim(0) == B && transformed.dim(2) == C && transformed.dim(3) == H &&
                  transformed.dim(4) == W,
              "composite: transformed " + shape_str(transformed.shape()) +
                  " does not match prev " + shape_str(prev.shape()));
  if (generated)
    check_shape(same_shape(*generated, prev), "composite: generated image shape mismatch");
  const std::int64_t n_cand = 1 + N + (generated ? 1 : 0);
  check_shape(mask_logits.rank() == 4 && mask_logits.dim(0) == B && mask_logits.dim(2) == H &&
                  mask_logits.dim(3) == W,
              "composite: mask logits must be [B,C_mask,H,W]");
  check_shape(mask_logits.dim(1) == n_cand,
              "composite: mask has " + std::to_string(mask_logits.dim(1)) + " channels but " +
                  std::to_string(n_cand) + " candidates");

  Tensor<T> mask = softmax_axis(g, mask_logits, 1);

  const bool has_gen = generated.has_value();
  Tensor<T> gen = has_gen ? *generated : Tensor<T>();
  bool tracked = detail::track(g, {&prev, &transformed, &mask});
  if (has_gen) tracked = tracked || detail::track(g, {&gen});
  Tensor<T> out({B, C, H, W}, tracked);
  const std::int64_t hw = H * W;
  auto candidate = [&](std::int64_t cand, std::int64_t b, std::int64_t c) -> const T* {
    if (cand == 0) return prev.data() + (b * C + c) * hw;
    if (cand <= N) return transformed.data() + (((b * N + cand - 1) * C) + c) * hw;
    return gen.data() + (b * C + c) * hw;
  };
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < C; ++c) {
      T* dst = out.data() + (b * C + c) * hw;
      std::fill(dst, dst + hw, T(0));
      for (std::int64_t cand = 0; cand < n_cand; ++cand) {
        const T* w = mask.data() + (b * n_cand + cand) * hw;
        const T* v = candidate(cand, b, c);
        for (std::int64_t p = 0; p < hw; ++p) dst[p] += w[p] * v[p];
      }
    }
  out.check_finite("composite");

  if (out.requires_grad()) {
    g.record([prev, transformed, gen, has_gen, mask, out, B, C, N, hw, n_cand]() mutable {
      if (!out.has_grad()) return;
      auto candidate = [&](std::int64_t cand, std::int64_t b, std::int64_t c) -> const T* {
        if (cand == 0) return prev.data() + (b * C + c) * hw;
        if (cand <= N) return transformed.data() + (((b * N + cand - 1) * C) + c) * hw;
        return gen.data() + (b * C + c) * hw;
      };
      auto candidate_grad = [&](std::int64_t cand, std::int64_t b, std::int64_t c) -> T* {
        if (cand == 0) return prev.requires_grad() ? prev.grad() + (b * C + c) * hw : nullptr;
        if (cand <= N)
          return transformed.requires_grad()
                     ? transformed.grad() + (((b * N + cand - 1) * C) + c) * hw
                     : nullptr;
        return (has_gen && gen.requires_grad()) ? gen.grad() + (b * C + c) * hw : nullptr;
      };
      for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t cand = 0; cand < n_cand; ++cand) {
          const T* w = mask.data() + (b * n_cand + cand) * hw;
          T* dw = mask.requires_grad() ? mask.grad() + (b * n_cand + cand) * hw : nullptr;
          for (std::int64_t c = 0; c < C; ++c) {
            const T* dy = out.grad() + (b * C + c) * hw;
            const T* v = candidate(cand, b, c);
            T* dv = candidate_grad(cand, b, c);
            if (dv)
              for (std::int64_t p = 0; p < hw; ++p) dv[p] += dy[p] * w[p];
            if (dw)
              for (std::int64_t p = 0; p < hw; ++p) dw[p] += dy[p] * v[p];
          }
        }
      }
    });
  }
  return CompositeResult<T>{out, CompositeMask<T>{mask}};
}

}  // namespace ops
}  // namespace vp
