#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "videopred/conv_lstm.hpp"
#include "videopred/motion.hpp"
#include "videopred/ops.hpp"

namespace vp {

enum class Variant { kDNA, kCDNA, kSTP, kRawPixel };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kDNA: return "dna";
    case Variant::kCDNA: return "cdna";
    case Variant::kSTP: return "stp";
    case Variant::kRawPixel: return "raw";
  }
  return "?";
}

inline Variant variant_from_name(const std::string& s) {
  if (s == "dna") return Variant::kDNA;
  if (s == "cdna") return Variant::kCDNA;
  if (s == "stp") return Variant::kSTP;
  if (s == "raw") return Variant::kRawPixel;
  fail("unknown model variant '" + s + "' (expected dna|cdna|stp|raw)");
}

/// Static description of a predictor instance. channel_widths holds the
/// widths of [conv1, lstm1..lstm7]; the paper-scale defaults below are a
/// plausible pyramid (the published model's widths are not public).
struct ModelConfig {
  Variant variant = Variant::kCDNA;
  int num_transforms = 10;
  int kernel_size = 5;  // advection kernel side length
  int image_h = 64;
  int image_w = 64;
  std::vector<int> channel_widths = {32, 32, 32, 64, 64, 128, 64, 32};
  int context_frames = 2;
  int state_dim = 2;
  int action_dim = 2;
  bool action_conditioned = true;
  bool use_generated_channel = false;
  int stp_hidden_units = 100;
  bool include_context_loss = false;

  /// DNA advects a single image; CDNA/STP advect num_transforms of them.
  int effective_transforms() const {
    if (variant == Variant::kDNA) return 1;
    if (variant == Variant::kRawPixel) return 0;
    return num_transforms;
  }

  /// Candidates: previous frame + transforms (+ generated image).
  int mask_channels() const {
    return 1 + effective_transforms() + (use_generated_channel ? 1 : 0);
  }

  void validate() const {
    check(image_h % 8 == 0 && image_w % 8 == 0,
          "model: image size " + std::to_string(image_h) + "x" + std::to_string(image_w) +
              " must be divisible by 8 (three stride-2 reductions)");
    check(channel_widths.size() == 8, "model: channel_widths must list conv1 + 7 LSTM widths");
    for (int w : channel_widths) check(w >= 1, "model: channel widths must be positive");
    check(kernel_size % 2 == 1 && kernel_size >= 1, "model: kernel_size must be odd");
    check(kernel_size <= std::min(image_h, image_w), "model: kernel_size exceeds image");
    check(num_transforms >= 1, "model: num_transforms must be >= 1");
    check(context_frames >= 1, "model: context_frames must be >= 1");
    check(state_dim >= 1 && action_dim >= 1, "model: state/action dims must be >= 1");
    check(stp_hidden_units >= 1, "model: stp_hidden_units must be >= 1");
  }
};

/// Named parameter tensors in fixed registration order.
template <typename T>
class ParamStore {
 public:
  /// Registers a parameter. The returned handle shares storage with the
  /// stored tensor (safe across later insertions).
  Tensor<T> add(const std::string& name, Tensor<T> t) {
    t.set_requires_grad(true);
    items_.emplace_back(name, t);
    return t;
  }

  Tensor<T>* find(const std::string& name) {
    for (auto& [n, t] : items_)
      if (n == name) return &t;
    return nullptr;
  }

  const std::vector<std::pair<std::string, Tensor<T>>>& items() const { return items_; }
  std::vector<std::pair<std::string, Tensor<T>>>& items() { return items_; }

  std::int64_t total_parameters() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : items_) n += t.numel();
    return n;
  }

  void zero_grads() {
    for (auto& [name, t] : items_) t.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> items_;
};

/// Hidden/cell maps for the seven conv-LSTM layers, zeroed at sequence start.
template <typename T>
struct LayerStates {
  std::vector<LstmState<T>> layers;
};

template <typename T>
using TransformParams =
    std::variant<std::monostate, KernelMap<T>, KernelSet<T>, AffineSet<T>>;

/// One prediction step: the composited next frame, the predicted internal
/// state, and the model's motion internals for inspection.
template <typename T>
struct StepOutput {
  Tensor<T> image;                 // [B,3,H,W]
  Tensor<T> state;                 // [B,S]
  CompositeMask<T> mask;           // empty for the raw-pixel ablation
  TransformParams<T> transform_params;
  Tensor<T> transformed_images;    // [B,N,3,H,W]; empty for raw-pixel
};

enum class RolloutKind { kAutoregressive, kScheduled };

struct RolloutMode {
  RolloutKind kind = RolloutKind::kAutoregressive;
  double ground_truth_prob = 0.0;  // scheduled only

  static RolloutMode autoregressive() { return {RolloutKind::kAutoregressive, 0.0}; }
  static RolloutMode scheduled(double p) { return {RolloutKind::kScheduled, p}; }
};

template <typename T>
struct RolloutResult {
  /// Predictions of frames context..context+horizon-1, in order.
  std::vector<StepOutput<T>> predictions;
  /// Warm-up predictions of frames 1..context-1 (normally excluded from loss).
  std::vector<StepOutput<T>> context_predictions;
};

/// The stacked conv-LSTM predictor.
///
/// Trunk: 5x5 stride-2 conv, LSTM1-2 at H/2, stride-2 conv, LSTM3-4 at H/4,
/// stride-2 conv, LSTM5 at H/8 (state+action tiled and concatenated to its
/// input), then 2x upsampling before LSTM6 (H/4), the LSTM3 skip concat and
/// 2x upsampling before LSTM7 (H/2), and the LSTM1 skip concat and a final
/// 2x upsampling before the head conv at full resolution. The head conv
/// emits the compositing-mask logits (all variants), the per-pixel kernels
/// (DNA) and the generated-pixel channels (when enabled); CDNA kernels and
/// STP affines are decoded from the flattened LSTM5 output.
template <typename T>
class Predictor {
 public:
  Predictor(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    build_params(seed);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  std::int64_t parameter_count() const { return params_.total_parameters(); }

  LayerStates<T> initial_states(std::int64_t batch) const {
    const std::int64_t h2 = cfg_.image_h / 2, w2 = cfg_.image_w / 2;
    const std::int64_t h4 = h2 / 2, w4 = w2 / 2, h8 = h4 / 2, w8 = w4 / 2;
    const auto& cw = cfg_.channel_widths;
    auto zero_state = [&](int width, std::int64_t hh, std::int64_t ww) {
      return LstmState<T>{Tensor<T>({batch, width, hh, ww}), Tensor<T>({batch, width, hh, ww})};
    };
    LayerStates<T> s;
    s.layers = {zero_state(cw[1], h2, w2), zero_state(cw[2], h2, w2),
                zero_state(cw[3], h4, w4), zero_state(cw[4], h4, w4),
                zero_state(cw[5], h8, w8), zero_state(cw[6], h4, w4),
                zero_state(cw[7], h2, w2)};
    return s;
  }

  /// Linear next-state head: state' = W * [state; action] + b.
  Tensor<T> predict_state(Graph<T>& g, const Tensor<T>& state, const Tensor<T>& action) const {
    Tensor<T> sa = ops::concat_channels(g, state, action);
    return ops::dense(g, sa, param("state.w"), param("state.b"));
  }

  /// Runs the trunk once: consumes the previous frame (plus state/action when
  /// action-conditioned), returns the next-frame prediction and new states.
  std::pair<StepOutput<T>, LayerStates<T>> forward_step(Graph<T>& g, const Tensor<T>& prev_image,
                                                        const Tensor<T>& state,
                                                        const Tensor<T>& action,
                                                        const LayerStates<T>& states) const {
    namespace o = ops;
    check_shape(prev_image.rank() == 4 && prev_image.dim(1) == 3 &&
                    prev_image.dim(2) == cfg_.image_h && prev_image.dim(3) == cfg_.image_w,
                "forward_step: image must be [B,3," + std::to_string(cfg_.image_h) + "," +
                    std::to_string(cfg_.image_w) + "], got " + shape_str(prev_image.shape()));
    check(states.layers.size() == 7, "forward_step: expected 7 layer states");
    const std::int64_t B = prev_image.dim(0);
    const std::int64_t h8 = cfg_.image_h / 8, w8 = cfg_.image_w / 8;

    LayerStates<T> next;
    next.layers.resize(7);

    Tensor<T> e0 = o::relu(g, o::conv2d(g, prev_image, param("conv1.w"), param("conv1.b"), 2));
    auto [h1, s1] = o::conv_lstm_cell(g, e0, states.layers[0], param("lstm1.w"), param("lstm1.b"));
    next.layers[0] = s1;
    auto [h2, s2] = o::conv_lstm_cell(g, h1, states.layers[1], param("lstm2.w"), param("lstm2.b"));
    next.layers[1] = s2;

    Tensor<T> d1 = o::relu(g, o::conv2d(g, h2, param("down1.w"), param("down1.b"), 2));
    auto [h3, s3] = o::conv_lstm_cell(g, d1, states.layers[2], param("lstm3.w"), param("lstm3.b"));
    next.layers[2] = s3;
    auto [h4, s4] = o::conv_lstm_cell(g, h3, states.layers[3], param("lstm4.w"), param("lstm4.b"));
    next.layers[3] = s4;

    Tensor<T> d2 = o::relu(g, o::conv2d(g, h4, param("down2.w"), param("down2.b"), 2));
    if (cfg_.action_conditioned) {
      check_shape(state.rank() == 2 && state.dim(0) == B && state.dim(1) == cfg_.state_dim,
                  "forward_step: state must be [B," + std::to_string(cfg_.state_dim) + "]");
      check_shape(action.rank() == 2 && action.dim(0) == B && action.dim(1) == cfg_.action_dim,
                  "forward_step: action must be [B," + std::to_string(cfg_.action_dim) + "]");
      Tensor<T> sa = o::concat_channels(g, state, action);
      Tensor<T> tiled = o::tile_spatial(g, sa, h8, w8);
      d2 = o::concat_channels(g, d2, tiled);
    }
    auto [h5, s5] = o::conv_lstm_cell(g, d2, states.layers[4], param("lstm5.w"), param("lstm5.b"));
    next.layers[4] = s5;

    Tensor<T> u1 = o::upsample2x(g, h5);
    auto [h6, s6] = o::conv_lstm_cell(g, u1, states.layers[5], param("lstm6.w"), param("lstm6.b"));
    next.layers[5] = s6;

    Tensor<T> u2 = o::upsample2x(g, o::concat_channels(g, h6, h3));
    auto [h7, s7] = o::conv_lstm_cell(g, u2, states.layers[6], param("lstm7.w"), param("lstm7.b"));
    next.layers[6] = s7;

    Tensor<T> u3 = o::upsample2x(g, o::concat_channels(g, h7, h1));
    Tensor<T> head = o::conv2d(g, u3, param("conv2.w"), param("conv2.b"), 1);

    StepOutput<T> out;
    out.state = cfg_.action_conditioned ? predict_state(g, state, action)
                                        : Tensor<T>({B, cfg_.state_dim});

    if (cfg_.variant == Variant::kRawPixel) {
      out.image = o::sigmoid(g, head);
      out.image.check_finite("forward_step");
      return {out, next};
    }

    const std::int64_t ks = cfg_.kernel_size;
    const std::int64_t n_mask = cfg_.mask_channels();
    const std::int64_t N = cfg_.effective_transforms();
    Tensor<T> mask_logits = o::slice_channels(g, head, 0, n_mask);
    std::int64_t ch = n_mask;

    Tensor<T> transformed;
    if (cfg_.variant == Variant::kDNA) {
      Tensor<T> dna_raw = o::slice_channels(g, head, ch, ch + ks * ks);
      ch += ks * ks;
      KernelMap<T> kmap = o::normalize_dna(g, dna_raw, ks);
      Tensor<T> adv = o::apply_dna(g, prev_image, kmap);
      transformed = adv.reshaped({B, 1, 3, cfg_.image_h, cfg_.image_w});
      out.transform_params = kmap;
    } else if (cfg_.variant == Variant::kCDNA) {
      Tensor<T> flat = h5.reshaped({B, h5.dim(1) * h5.dim(2) * h5.dim(3)});
      Tensor<T> logits = o::dense(g, flat, param("cdna.w"), param("cdna.b"));
      KernelSet<T> kset = o::normalize_cdna(g, logits.reshaped({B, N, ks * ks}), ks);
      transformed = o::apply_cdna(g, prev_image, kset);
      out.transform_params = kset;
    } else {  // STP
      Tensor<T> flat = h5.reshaped({B, h5.dim(1) * h5.dim(2) * h5.dim(3)});
      Tensor<T> hidden = o::relu(g, o::dense(g, flat, param("stp1.w"), param("stp1.b")));
      Tensor<T> theta = o::dense(g, hidden, param("stp2.w"), param("stp2.b"));
      AffineSet<T> affines{theta.reshaped({B, N, 2, 3})};
      transformed = o::apply_stp(g, prev_image, affines);
      out.transform_params = affines;
    }

    std::optional<Tensor<T>> generated;
    if (cfg_.use_generated_channel) {
      generated = o::sigmoid(g, o::slice_channels(g, head, ch, ch + 3));
      ch += 3;
    }

    auto comp = o::composite(g, prev_image, transformed, generated, mask_logits);
    out.image = comp.image;
    out.mask = comp.mask;
    out.transformed_images = transformed;
    return {out, next};
  }

  /// Multi-step prediction. `frames` holds the available ground-truth frames
  /// [B,Tf,3,H,W] (the first context_frames are always consumed; scheduled
  /// mode may consume later ones). Actions[B,Ta,A] must cover
  /// context+horizon-1 steps and are always ground truth. Scheduled mode
  /// draws one coin per (step, batch element) from `coin_rng`.
  RolloutResult<T> rollout(Graph<T>& g, const Tensor<T>& frames, const Tensor<T>& init_state,
                           const Tensor<T>& actions, int horizon, RolloutMode mode,
                           Rng* coin_rng = nullptr) const {
    check(horizon >= 1, "rollout: horizon must be >= 1");
    check_shape(frames.rank() == 5, "rollout: frames must be [B,T,3,H,W]");
    const std::int64_t B = frames.dim(0), Tf = frames.dim(1);
    const int T0 = cfg_.context_frames;
    const int n_steps = T0 + horizon - 1;
    check(Tf >= T0, "rollout: need at least " + std::to_string(T0) + " context frames");
    check_shape(actions.rank() == 3 && actions.dim(0) == B &&
                    actions.dim(2) == cfg_.action_dim,
                "rollout: actions must be [B,T," + std::to_string(cfg_.action_dim) + "]");
    check(actions.dim(1) >= n_steps,
          "rollout: insufficient actions (" + std::to_string(actions.dim(1)) + ") for context " +
              std::to_string(T0) + " + horizon " + std::to_string(horizon));
    if (mode.kind == RolloutKind::kScheduled) {
      check(coin_rng != nullptr, "rollout: scheduled mode needs a seeded generator");
      check(Tf >= n_steps, "rollout: scheduled mode needs ground-truth frames for every step");
    }

    RolloutResult<T> result;
    LayerStates<T> states = initial_states(B);
    Tensor<T> cur_state = init_state;
    Tensor<T> prev_pred_image;

    for (int t = 0; t < n_steps; ++t) {
      Tensor<T> input_image;
      if (t < T0) {
        input_image = frame_at(g, frames, t);
      } else if (mode.kind == RolloutKind::kScheduled) {
        // Per-sample mix of ground truth and own prediction.
        Tensor<T> gt = frame_at(g, frames, t);
        std::vector<bool> use_gt(static_cast<size_t>(B));
        bool any_gt = false, any_pred = false;
        for (std::int64_t b = 0; b < B; ++b) {
          use_gt[size_t(b)] = coin_rng->bernoulli(mode.ground_truth_prob);
          (use_gt[size_t(b)] ? any_gt : any_pred) = true;
        }
        if (!any_pred) {
          input_image = gt;
        } else if (!any_gt) {
          input_image = prev_pred_image;
        } else {
          input_image = select_rows(g, gt, prev_pred_image, use_gt);
        }
      } else {
        input_image = prev_pred_image;
      }

      Tensor<T> action = action_at(g, actions, t);
      auto [step_out, next_states] = forward_step(g, input_image, cur_state, action, states);
      states = std::move(next_states);
      cur_state = cfg_.action_conditioned ? step_out.state : cur_state;
      prev_pred_image = step_out.image;
      if (t < T0 - 1)
        result.context_predictions.push_back(std::move(step_out));
      else
        result.predictions.push_back(std::move(step_out));
    }
    return result;
  }

 private:
  const Tensor<T>& param(const std::string& name) const {
    const Tensor<T>* t = const_cast<ParamStore<T>&>(params_).find(name);
    check(t != nullptr, "predictor: missing parameter " + name);
    return *t;
  }

  static Tensor<T> frame_at(Graph<T>& g, const Tensor<T>& frames, int t) {
    // frames[B,T,3,H,W] -> [B,3,H,W] at index t (treat T as channel axis).
    (void)g;
    const std::int64_t B = frames.dim(0), Tn = frames.dim(1);
    const std::int64_t chw = frames.dim(2) * frames.dim(3) * frames.dim(4);
    Tensor<T> out({B, frames.dim(2), frames.dim(3), frames.dim(4)});
    for (std::int64_t b = 0; b < B; ++b)
      std::copy(frames.data() + (b * Tn + t) * chw, frames.data() + (b * Tn + t + 1) * chw,
                out.data() + b * chw);
    return out;
  }

  static Tensor<T> action_at(Graph<T>& g, const Tensor<T>& actions, int t) {
    (void)g;
    const std::int64_t B = actions.dim(0), Tn = actions.dim(1), A = actions.dim(2);
    Tensor<T> out({B, A});
    for (std::int64_t b = 0; b < B; ++b)
      std::copy(actions.data() + (b * Tn + t) * A, actions.data() + (b * Tn + t + 1) * A,
                out.data() + b * A);
    return out;
  }

  /// Row-wise choice between two [B,...] tensors (gradient flows only into
  /// the rows actually taken from the differentiable side).
  static Tensor<T> select_rows(Graph<T>& g, Tensor<T> gt, Tensor<T> pred,
                               std::vector<bool> use_gt) {
    check_shape(same_shape(gt, pred), "select_rows: shape mismatch");
    const std::int64_t B = gt.dim(0);
    const std::int64_t inner = gt.numel() / B;
    Tensor<T> out(gt.shape(), detail::track(g, {&gt, &pred}));
    for (std::int64_t b = 0; b < B; ++b) {
      const T* src = (use_gt[size_t(b)] ? gt.data() : pred.data()) + b * inner;
      std::copy(src, src + inner, out.data() + b * inner);
    }
    if (out.requires_grad()) {
      g.record([gt, pred, out, use_gt, B, inner]() mutable {
        if (!out.has_grad()) return;
        for (std::int64_t b = 0; b < B; ++b) {
          Tensor<T>& dst = use_gt[size_t(b)] ? gt : pred;
          if (!dst.requires_grad()) continue;
          const T* dy = out.grad() + b * inner;
          T* dx = dst.grad() + b * inner;
          for (std::int64_t i = 0; i < inner; ++i) dx[i] += dy[i];
        }
      });
    }
    return out;
  }

  void build_params(std::uint64_t seed) {
    Rng rng(derive_seed(seed, seed_tag::kModelInit));
    const auto& cw = cfg_.channel_widths;
    const std::int64_t ks = cfg_.kernel_size;
    const std::int64_t h8 = cfg_.image_h / 8, w8 = cfg_.image_w / 8;
    const std::int64_t N = cfg_.effective_transforms();

    auto conv_init = [&](const std::string& name, std::int64_t out_c, std::int64_t in_c,
                         std::int64_t k) {
      const T lim = T(std::sqrt(1.0 / double(in_c * k * k)));
      params_.add(name + ".w", Tensor<T>::uniform({out_c, in_c, k, k}, rng, -lim, lim));
      params_.add(name + ".b", Tensor<T>({out_c}));
    };
    auto lstm_init = [&](const std::string& name, std::int64_t width, std::int64_t in_c) {
      const std::int64_t fan_in = (in_c + width) * 25;
      const T lim = T(std::sqrt(1.0 / double(fan_in)));
      params_.add(name + ".w",
                  Tensor<T>::uniform({4 * width, in_c + width, 5, 5}, rng, -lim, lim));
      Tensor<T> b = params_.add(name + ".b", Tensor<T>({4 * width}));
      // forget-gate bias starts at 1 (gate block order: i, f, o, g)
      for (std::int64_t i = width; i < 2 * width; ++i) b.data()[i] = T(1);
    };
    auto dense_init = [&](const std::string& name, std::int64_t out_n, std::int64_t in_n) {
      const T lim = T(std::sqrt(1.0 / double(in_n)));
      params_.add(name + ".w", Tensor<T>::uniform({out_n, in_n}, rng, -lim, lim));
      params_.add(name + ".b", Tensor<T>({out_n}));
    };

    conv_init("conv1", cw[0], 3, 5);
    lstm_init("lstm1", cw[1], cw[0]);
    lstm_init("lstm2", cw[2], cw[1]);
    conv_init("down1", cw[2], cw[2], 3);
    lstm_init("lstm3", cw[3], cw[2]);
    lstm_init("lstm4", cw[4], cw[3]);
    conv_init("down2", cw[4], cw[4], 3);
    const std::int64_t sa = cfg_.action_conditioned ? cfg_.state_dim + cfg_.action_dim : 0;
    lstm_init("lstm5", cw[5], cw[4] + sa);
    lstm_init("lstm6", cw[6], cw[5]);
    lstm_init("lstm7", cw[7], cw[6] + cw[3]);

    std::int64_t head_out = 3;  // raw-pixel ablation emits the frame directly
    if (cfg_.variant != Variant::kRawPixel) {
      head_out = cfg_.mask_channels();
      if (cfg_.variant == Variant::kDNA) head_out += ks * ks;
      if (cfg_.use_generated_channel) head_out += 3;
    }
    conv_init("conv2", head_out, cw[7] + cw[1], 5);

    const std::int64_t flat5 = cw[5] * h8 * w8;
    if (cfg_.variant == Variant::kCDNA) {
      dense_init("cdna", N * ks * ks, flat5);
    } else if (cfg_.variant == Variant::kSTP) {
      dense_init("stp1", cfg_.stp_hidden_units, flat5);
      dense_init("stp2", N * 6, cfg_.stp_hidden_units);
      // start every warp at the identity
      Tensor<T>* b = params_.find("stp2.b");
      for (std::int64_t n = 0; n < N; ++n) {
        b->data()[n * 6 + 0] = T(1);
        b->data()[n * 6 + 4] = T(1);
      }
    }
    if (cfg_.action_conditioned)
      dense_init("state", cfg_.state_dim, cfg_.state_dim + cfg_.action_dim);
  }

  ModelConfig cfg_;
  ParamStore<T> params_;
};

}  // namespace vp
