#pragma once

#include <utility>

#include "videopred/ops.hpp"

namespace vp {

template <typename T>
struct LstmState {
  Tensor<T> h;
  Tensor<T> c;
};

namespace ops {

/// Convolutional LSTM cell. One 5x5 same-padding convolution over the
/// channel-concatenated [input, h_prev] produces the four gate maps
/// (order i, f, o, g):
///   i,f,o = sigmoid(.), g = tanh(.), c' = f*c + i*g, h' = o*tanh(c').
/// The cell's output is h'.
template <typename T>
std::pair<Tensor<T>, LstmState<T>> conv_lstm_cell(Graph<T>& g, const Tensor<T>& x,
                                                  const LstmState<T>& state, const Tensor<T>& w,
                                                  const Tensor<T>& b) {
  check_shape(x.rank() == 4, "conv_lstm_cell: input must be [B,C,H,W]");
  check_shape(state.h.rank() == 4 && state.c.rank() == 4,
              "conv_lstm_cell: state must be [B,C,H,W]");
  check_shape(x.dim(0) == state.h.dim(0) && x.dim(2) == state.h.dim(2) &&
                  x.dim(3) == state.h.dim(3),
              "conv_lstm_cell: input " + shape_str(x.shape()) + " and state " +
                  shape_str(state.h.shape()) + " spatial sizes differ");
  check_shape(same_shape(state.h, state.c), "conv_lstm_cell: h/c shape mismatch");
  const std::int64_t C = state.h.dim(1);
  check_shape(w.rank() == 4 && w.dim(0) == 4 * C && w.dim(1) == x.dim(1) + C,
              "conv_lstm_cell: weight " + shape_str(w.shape()) + " inconsistent with input " +
                  shape_str(x.shape()) + " and state width " + std::to_string(C));

  Tensor<T> xh = concat_channels(g, x, state.h);
  Tensor<T> z = conv2d(g, xh, w, b, 1, Pad::kSame);
  Tensor<T> gi = sigmoid(g, slice_channels(g, z, 0, C));
  Tensor<T> gf = sigmoid(g, slice_channels(g, z, C, 2 * C));
  Tensor<T> go = sigmoid(g, slice_channels(g, z, 2 * C, 3 * C));
  Tensor<T> gg = tanh(g, slice_channels(g, z, 3 * C, 4 * C));
  Tensor<T> c_next = add(g, mul(g, gf, state.c), mul(g, gi, gg));
  Tensor<T> h_next = mul(g, go, tanh(g, c_next));
  return {h_next, LstmState<T>{h_next, c_next}};
}

}  // namespace ops
}  // namespace vp
