#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "videopred/common.hpp"

namespace vp {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

/// N-dimensional dense array with optional gradient buffer.
///
/// Value semantics with shared storage: copying a Tensor aliases the same
/// data/grad buffers, which is what lets recorded graph nodes see gradient
/// accumulation. Layout is always contiguous row-major; there are no views
/// or broadcasting beyond what individual ops implement.
template <typename T>
class Tensor {
  struct Storage {
    std::vector<T> data;
    std::vector<T> grad;  // empty until first gradient accumulation
    bool requires_grad = false;
  };

 public:
  using value_type = T;

  Tensor() : store_(std::make_shared<Storage>()) {}

  explicit Tensor(Shape shape, bool requires_grad = false)
      : shape_(std::move(shape)), store_(std::make_shared<Storage>()) {
    for (auto d : shape_)
      check_shape(d >= 0, "tensor: negative dimension in " + shape_str(shape_));
    store_->data.assign(size_t(shape_numel(shape_)), T(0));
    store_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(std::move(shape), requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    Tensor t(std::move(shape), requires_grad);
    std::fill(t.data(), t.data() + t.numel(), value);
    return t;
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return full(Shape{}, value, requires_grad);
  }

  static Tensor from_data(Shape shape, std::vector<T> values, bool requires_grad = false) {
    Tensor t;
    t.shape_ = std::move(shape);
    check_shape(shape_numel(t.shape_) == std::int64_t(values.size()),
                "tensor: data length " + std::to_string(values.size()) +
                    " does not match shape " + shape_str(t.shape_));
    t.store_->data = std::move(values);
    t.store_->requires_grad = requires_grad;
    return t;
  }

  static Tensor uniform(Shape shape, Rng& rng, T lo, T hi, bool requires_grad = false) {
    Tensor t(std::move(shape), requires_grad);
    T* p = t.data();
    for (std::int64_t i = 0; i < t.numel(); ++i) p[i] = T(rng.uniform(double(lo), double(hi)));
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::int64_t dim(int i) const { return shape_.at(size_t(i)); }
  int rank() const { return int(shape_.size()); }
  std::int64_t numel() const { return std::int64_t(store_->data.size()); }

  T* data() { return store_->data.data(); }
  const T* data() const { return store_->data.data(); }
  std::vector<T>& vec() { return store_->data; }
  const std::vector<T>& vec() const { return store_->data; }

  bool requires_grad() const { return store_->requires_grad; }
  void set_requires_grad(bool v) { store_->requires_grad = v; }

  bool has_grad() const { return !store_->grad.empty(); }

  /// Gradient buffer, allocated (zero-filled) on first use.
  T* grad() {
    if (store_->grad.empty()) store_->grad.assign(store_->data.size(), T(0));
    return store_->grad.data();
  }
  const T* grad() const {
    check(!store_->grad.empty(), "tensor: gradient not populated");
    return store_->grad.data();
  }

  void zero_grad() {
    if (!store_->grad.empty()) std::fill(store_->grad.begin(), store_->grad.end(), T(0));
  }

  /// True when this tensor aliases the same storage as `other`.
  bool same_storage(const Tensor& other) const { return store_ == other.store_; }

  /// Reinterpret the same storage under a new shape (no copy; gradients are
  /// shared too, so no graph node is needed for reshape).
  Tensor reshaped(Shape new_shape) const {
    check_shape(shape_numel(new_shape) == numel(),
                "reshape: " + shape_str(shape_) + " -> " + shape_str(new_shape) +
                    " changes element count");
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.store_ = store_;
    return t;
  }

  /// Deep copy of data (fresh storage, gradient not copied).
  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.store_->data = store_->data;
    t.store_->requires_grad = store_->requires_grad;
    return t;
  }

  T item() const {
    check_shape(numel() == 1, "item: tensor has " + std::to_string(numel()) + " elements");
    return store_->data[0];
  }

  bool all_finite() const {
    for (T v : store_->data)
      if (!std::isfinite(double(v))) return false;
    return true;
  }

  void check_finite(const std::string& what) const {
    if (debug_checks() && !all_finite()) fail(what + ": non-finite values detected");
  }

  /// Casts element type (used to run the same model graph in double for
  /// finite-difference checks).
  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(store_->data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = U(store_->data[i]);
    return Tensor<U>::from_data(shape_, std::move(out), requires_grad());
  }

 private:
  Shape shape_;
  std::shared_ptr<Storage> store_;

  template <typename U>
  friend class Tensor;
};

template <typename T>
inline bool same_shape(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape();
}

template <typename T>
inline T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  check_shape(same_shape(a, b), "max_abs_diff: shape mismatch");
  T m = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace vp
