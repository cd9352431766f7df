#pragma once

#include <functional>
#include <vector>

#include "videopred/tensor.hpp"

namespace vp {

/// Reverse-mode tape. Ops executed against a recording graph append one node
/// each (a closure over their input/output tensors); backward() replays the
/// nodes in exact reverse execution order, accumulating into the shared grad
/// buffers of every tensor on the path that requires a gradient.
///
/// A non-recording graph ("inference mode") runs the same ops without
/// building nodes. Recording and backward are single-threaded.
template <typename T>
class Graph {
 public:
  explicit Graph(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  void record(std::function<void()> backward_fn) {
    if (recording_) nodes_.push_back(std::move(backward_fn));
  }

  size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and runs reverse accumulation. `loss` must be
  /// a scalar produced by ops recorded on this graph. A second backward on
  /// the same recording is an error (grads would double-accumulate).
  void backward(Tensor<T>& loss) {
    check(recording_, "backward: graph is not recording");
    check(!backward_done_, "backward: already ran on this graph; reset() first");
    check_shape(loss.numel() == 1,
                "backward: loss must be scalar, got " + shape_str(loss.shape()));
    loss.grad()[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    backward_done_ = true;
  }

  /// Drops all recorded nodes so the graph can record a fresh forward pass.
  void reset() {
    nodes_.clear();
    backward_done_ = false;
  }

 private:
  std::vector<std::function<void()>> nodes_;
  bool recording_ = true;
  bool backward_done_ = false;
};

namespace detail {

/// Output tensors require grad iff some input does and the graph records.
template <typename T>
bool track(const Graph<T>& g, std::initializer_list<const Tensor<T>*> inputs) {
  if (!g.recording()) return false;
  for (const Tensor<T>* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

}  // namespace detail

}  // namespace vp
