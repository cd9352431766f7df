#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace vp {

/// Base class for all checked errors raised by the library.
/// CLI maps these to exit code 1; anything else is a bug.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }
[[noreturn]] inline void fail_shape(const std::string& msg) { throw ShapeError(msg); }

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

inline void check_shape(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

/// Runtime toggle for expensive sanity checks (NaN/Inf scans, kernel
/// normalization). Off by default in normal runs; the test suites flip it on.
inline bool& debug_checks() {
  static bool enabled = false;
  return enabled;
}

// ---------------------------------------------------------------------------
// PRNG.
//
// SplitMix64: a documented, platform-independent 64-bit generator. Every
// random decision in the library (weight init, world generation, shuffling,
// scheduled-sampling coins) flows from one of these, so identical seeds give
// bit-identical results on any machine.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  /// True with probability p.
  bool bernoulli(double p) { return next_double() < p; }

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

 private:
  std::uint64_t state_;
};

/// Derives a stream seed from a root seed and a purpose tag. Used to split
/// one --seed into independent per-purpose streams (documented scheme:
/// SplitMix64 mix of seed XOR tag).
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t tag) {
  Rng r(root ^ (0xA0761D6478BD642FULL * (tag + 1)));
  return r.next_u64();
}

// Fixed per-purpose tags (see derive_seed).
namespace seed_tag {
constexpr std::uint64_t kWorldTrain = 1;
constexpr std::uint64_t kWorldVal = 2;
constexpr std::uint64_t kWorldTestSeen = 3;
constexpr std::uint64_t kWorldTestNovel = 4;
constexpr std::uint64_t kModelInit = 5;
constexpr std::uint64_t kTrainLoop = 6;
}  // namespace seed_tag

// ---------------------------------------------------------------------------
// Fast elementwise transcendentals.
//
// Float path uses a degree-5 polynomial exp (~1e-7 relative error, branch-free
// core, auto-vectorizes); double path uses std::exp so 64-bit gradient checks
// run against full precision. Both are deterministic.
// ---------------------------------------------------------------------------

inline float fast_exp(float x) {
  // exp(x) = 2^n * exp(r), r in [-ln2/2, ln2/2]
  constexpr float kLog2e = 1.442695040f;
  constexpr float kLn2Hi = 0.693359375f;
  constexpr float kLn2Lo = -2.12194440e-4f;
  x = x < 88.0f ? x : 88.0f;
  x = x > -87.0f ? x : -87.0f;
  float n = std::floor(x * kLog2e + 0.5f);
  float r = x - n * kLn2Hi - n * kLn2Lo;
  float p = 1.9875691500e-4f;
  p = p * r + 1.3981999507e-3f;
  p = p * r + 8.3334519073e-3f;
  p = p * r + 4.1665795894e-2f;
  p = p * r + 1.6666665459e-1f;
  p = p * r + 5.0000001201e-1f;
  float y = p * r * r + r + 1.0f;
  union {
    float f;
    std::int32_t i;
  } scale;
  scale.i = (std::int32_t(n) + 127) << 23;
  return y * scale.f;
}

inline double fast_exp(double x) { return std::exp(x); }

template <typename T>
inline T sigmoid_scalar(T x) {
  if (x >= T(0)) {
    T e = fast_exp(-x);
    return T(1) / (T(1) + e);
  }
  T e = fast_exp(x);
  return e / (T(1) + e);
}

template <typename T>
inline T tanh_scalar(T x) {
  return T(2) * sigmoid_scalar(T(2) * x) - T(1);
}

}  // namespace vp
