#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "videopred/checkpoint.hpp"
#include "videopred/config.hpp"
#include "videopred/model.hpp"
#include "videopred/world.hpp"

namespace vp {

// ---------------------------------------------------------------------------
// Episode <-> tensor packing
// ---------------------------------------------------------------------------

/// Packs frames [offset, offset+len) of the chosen episodes into a
/// [B,len,3,H,W] tensor (converting from the episodes' channel-last layout).
template <typename T>
Tensor<T> pack_frames(const std::vector<Episode>& eps, const std::vector<int>& idx,
                      const std::vector<int>& offsets, int len) {
  check(!idx.empty(), "pack_frames: empty batch");
  const Episode& first = eps[size_t(idx[0])];
  const int H = first.H, W = first.W;
  Tensor<T> out({std::int64_t(idx.size()), len, 3, H, W});
  for (size_t b = 0; b < idx.size(); ++b) {
    const Episode& ep = eps[size_t(idx[b])];
    check(ep.H == H && ep.W == W, "pack_frames: mixed episode sizes");
    check(offsets[b] + len <= ep.T, "pack_frames: window exceeds episode length");
    for (int t = 0; t < len; ++t) {
      const float* src = ep.frame(offsets[b] + t);  // [H,W,3]
      T* dst = out.data() + ((std::int64_t(b) * len + t) * 3) * H * W;
      for (int p = 0; p < H * W; ++p) {
        dst[0 * H * W + p] = T(src[p * 3 + 0]);
        dst[1 * H * W + p] = T(src[p * 3 + 1]);
        dst[2 * H * W + p] = T(src[p * 3 + 2]);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> pack_states_at(const std::vector<Episode>& eps, const std::vector<int>& idx,
                         const std::vector<int>& offsets) {
  const int S = eps[size_t(idx[0])].S;
  Tensor<T> out({std::int64_t(idx.size()), S});
  for (size_t b = 0; b < idx.size(); ++b) {
    const Episode& ep = eps[size_t(idx[b])];
    for (int s = 0; s < S; ++s) out.data()[b * size_t(S) + s] = T(ep.states[size_t(offsets[b]) * S + s]);
  }
  return out;
}

template <typename T>
Tensor<T> pack_states(const std::vector<Episode>& eps, const std::vector<int>& idx,
                      const std::vector<int>& offsets, int len) {
  const int S = eps[size_t(idx[0])].S;
  Tensor<T> out({std::int64_t(idx.size()), len, S});
  for (size_t b = 0; b < idx.size(); ++b) {
    const Episode& ep = eps[size_t(idx[b])];
    for (int t = 0; t < len; ++t)
      for (int s = 0; s < S; ++s)
        out.data()[(b * size_t(len) + t) * S + s] = T(ep.states[size_t(offsets[b] + t) * S + s]);
  }
  return out;
}

template <typename T>
Tensor<T> pack_actions(const std::vector<Episode>& eps, const std::vector<int>& idx,
                       const std::vector<int>& offsets, int len) {
  const int A = eps[size_t(idx[0])].A;
  Tensor<T> out({std::int64_t(idx.size()), len, A});
  for (size_t b = 0; b < idx.size(); ++b) {
    const Episode& ep = eps[size_t(idx[b])];
    for (int t = 0; t < len; ++t)
      for (int a = 0; a < A; ++a)
        out.data()[(b * size_t(len) + t) * A + a] = T(ep.actions[size_t(offsets[b] + t) * A + a]);
  }
  return out;
}

/// Frame t of a packed [B,T,3,H,W] tensor as a plain [B,3,H,W] tensor.
template <typename T>
Tensor<T> packed_frame(const Tensor<T>& frames, int t) {
  const std::int64_t B = frames.dim(0), Tn = frames.dim(1);
  const std::int64_t chw = frames.dim(2) * frames.dim(3) * frames.dim(4);
  Tensor<T> out({B, frames.dim(2), frames.dim(3), frames.dim(4)});
  for (std::int64_t b = 0; b < B; ++b)
    std::copy(frames.data() + (b * Tn + t) * chw, frames.data() + (b * Tn + t + 1) * chw,
              out.data() + b * chw);
  return out;
}

template <typename T>
Tensor<T> packed_state(const Tensor<T>& states, int t) {
  const std::int64_t B = states.dim(0), Tn = states.dim(1), S = states.dim(2);
  Tensor<T> out({B, S});
  for (std::int64_t b = 0; b < B; ++b)
    std::copy(states.data() + (b * Tn + t) * S, states.data() + (b * Tn + t + 1) * S,
              out.data() + b * S);
  return out;
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// L2 sequence loss: mean squared error over all predicted-frame pixels plus
/// state_loss_weight times the mean squared state error. target_frames is
/// [B,T,3,H,W] and target_states [B,T,S], aligned with `preds`.
template <typename T>
Tensor<T> sequence_loss(Graph<T>& g, const std::vector<StepOutput<T>>& preds,
                        const Tensor<T>& target_frames, const Tensor<T>& target_states,
                        double state_loss_weight, bool with_state = true) {
  const int n = int(preds.size());
  check(n >= 1, "sequence_loss: no predictions");
  check(std::int64_t(n) == target_frames.dim(1),
        "sequence_loss: " + std::to_string(n) + " predictions vs " +
            std::to_string(target_frames.dim(1)) + " target frames");
  Tensor<T> img_loss;
  for (int t = 0; t < n; ++t) {
    Tensor<T> l = ops::mse(g, preds[size_t(t)].image, packed_frame(target_frames, t));
    img_loss = (t == 0) ? l : ops::add(g, img_loss, l);
  }
  img_loss = ops::scale(g, img_loss, T(1.0 / n));
  if (!with_state || state_loss_weight == 0.0) return img_loss;

  check(std::int64_t(n) == target_states.dim(1), "sequence_loss: target state count mismatch");
  Tensor<T> state_loss;
  for (int t = 0; t < n; ++t) {
    Tensor<T> l = ops::mse(g, preds[size_t(t)].state, packed_state(target_states, t));
    state_loss = (t == 0) ? l : ops::add(g, state_loss, l);
  }
  state_loss = ops::scale(g, state_loss, T(state_loss_weight / n));
  return ops::add(g, img_loss, state_loss);
}

// ---------------------------------------------------------------------------
// ADAM
// ---------------------------------------------------------------------------

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m, v;  // parallel to the param store's order
  std::int64_t t = 0;

  static AdamState init(const ParamStore<T>& params) {
    AdamState s;
    for (const auto& [name, p] : params.items()) {
      s.m.push_back(Tensor<T>(p.shape()));
      s.v.push_back(Tensor<T>(p.shape()));
    }
    return s;
  }
};

/// One bias-corrected ADAM update from the gradients currently stored on the
/// parameters. Missing gradients count as zero; non-finite gradients are a
/// checked error naming the parameter.
template <typename T>
void adam_step(ParamStore<T>& params, AdamState<T>& opt, const TrainConfig& cfg) {
  check(opt.m.size() == params.items().size(), "adam_step: optimizer/param mismatch");
  opt.t += 1;
  const T b1 = T(cfg.beta1), b2 = T(cfg.beta2);
  const T c1 = T(1) - T(std::pow(cfg.beta1, double(opt.t)));
  const T c2 = T(1) - T(std::pow(cfg.beta2, double(opt.t)));
  const T lr = T(cfg.learning_rate), eps = T(cfg.epsilon);
  for (size_t i = 0; i < params.items().size(); ++i) {
    auto& [name, p] = params.items()[i];
    T* m = opt.m[i].data();
    T* v = opt.v[i].data();
    const bool has_g = p.has_grad();
    const T* gr = has_g ? p.grad() : nullptr;
    if (has_g) {
      for (std::int64_t j = 0; j < p.numel(); ++j)
        if (!std::isfinite(double(gr[j])))
          fail("adam_step: non-finite gradient in parameter '" + name + "'");
    }
    for (std::int64_t j = 0; j < p.numel(); ++j) {
      const T gj = has_g ? gr[j] : T(0);
      m[j] = b1 * m[j] + (T(1) - b1) * gj;
      v[j] = b2 * v[j] + (T(1) - b2) * gj * gj;
      const T mh = m[j] / c1;
      const T vh = v[j] / c2;
      p.data()[j] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct LossLogEntry {
  std::int64_t step = 0;
  double train_loss = 0;
  bool has_val = false;
  double val_loss = 0;        // total (image + weighted state)
  double val_image_loss = 0;  // image term only
};

struct TrainResult {
  std::vector<LossLogEntry> log;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::int64_t best_val_step = -1;
  std::string best_checkpoint_path;
  std::string final_checkpoint_path;
};

namespace train_detail {

/// Deterministic epoch permutation: episode visit order for epoch e depends
/// only on (seed, e), so training resumes bit-identically from (seed, step).
inline std::vector<int> epoch_permutation(std::uint64_t seed, std::int64_t epoch, int n) {
  std::vector<int> perm(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) perm[size_t(i)] = i;
  Rng rng(derive_seed(seed, 0x1000 + std::uint64_t(epoch)));
  for (int i = n - 1; i > 0; --i)
    std::swap(perm[size_t(i)], perm[size_t(rng.next_below(std::uint64_t(i + 1)))]);
  return perm;
}

}  // namespace train_detail

/// Mean validation losses (total and image-only) over the first
/// `max_episodes` validation episodes, fully autoregressive, window offset 0.
template <typename T>
std::pair<double, double> validation_loss(const Predictor<T>& model,
                                          const std::vector<Episode>& val_eps,
                                          const TrainConfig& cfg) {
  const int T0 = model.config().context_frames;
  const int horizon = cfg.train_horizon;
  const int len = T0 + horizon;
  const int n_eps = std::min<int>(int(val_eps.size()), cfg.val_max_episodes);
  check(n_eps > 0, "validation_loss: no validation episodes");
  const bool with_state = model.config().action_conditioned;

  double total = 0, image_only = 0;
  int batches = 0;
  for (int start = 0; start < n_eps; start += cfg.batch_size) {
    std::vector<int> idx, offsets;
    for (int i = start; i < std::min(n_eps, start + cfg.batch_size); ++i) {
      idx.push_back(i);
      offsets.push_back(0);
    }
    Graph<T> g(false);
    Tensor<T> frames = pack_frames<T>(val_eps, idx, offsets, len);
    Tensor<T> init_state = pack_states_at<T>(val_eps, idx, offsets);
    Tensor<T> actions = pack_actions<T>(val_eps, idx, offsets, len);
    auto rollout = model.rollout(g, frames, init_state, actions, horizon,
                                 RolloutMode::autoregressive());
    std::vector<int> tgt_off = offsets;
    for (auto& o : tgt_off) o += T0;
    Tensor<T> tgt_frames = pack_frames<T>(val_eps, idx, tgt_off, horizon);
    Tensor<T> tgt_states = pack_states<T>(val_eps, idx, tgt_off, horizon);
    Tensor<T> li = sequence_loss(g, rollout.predictions, tgt_frames, tgt_states, 0.0, false);
    Tensor<T> lt = with_state ? sequence_loss(g, rollout.predictions, tgt_frames, tgt_states,
                                              cfg.state_loss_weight, true)
                              : li;
    total += double(lt.item());
    image_only += double(li.item());
    ++batches;
  }
  return {total / batches, image_only / batches};
}

/// Runs the training protocol: seeded minibatch shuffling, scheduled-sampling
/// rollouts, L2 sequence loss, ADAM, periodic validation and checkpoints.
/// The reported best checkpoint is the one with minimum validation loss.
/// Pass start_step > 0 (with restored params/opt) to resume.
template <typename T>
TrainResult train(Predictor<T>& model, AdamState<T>& opt, const std::vector<Episode>& train_eps,
                  const std::vector<Episode>& val_eps, const TrainConfig& cfg,
                  const std::string& out_dir = "", std::int64_t start_step = 0,
                  bool verbose = false) {
  cfg.validate();
  const ModelConfig& mc = model.config();
  check(mc.context_frames == cfg.context_frames,
        "train: model context_frames " + std::to_string(mc.context_frames) +
            " != training context_frames " + std::to_string(cfg.context_frames));
  check(!train_eps.empty(), "train: empty training set");
  const int T0 = cfg.context_frames;
  const int len = T0 + cfg.train_horizon;
  for (const Episode& ep : train_eps) {
    check(ep.T >= len, "train: episode length " + std::to_string(ep.T) +
                           " too short for context " + std::to_string(T0) + " + horizon " +
                           std::to_string(cfg.train_horizon));
    check(ep.H == mc.image_h && ep.W == mc.image_w,
          "train: dataset image size " + std::to_string(ep.H) + "x" + std::to_string(ep.W) +
              " incompatible with model image size " + std::to_string(mc.image_h) + "x" +
              std::to_string(mc.image_w));
  }

  const int n_train = int(train_eps.size());
  const std::uint64_t loop_seed = derive_seed(cfg.seed, seed_tag::kTrainLoop);
  const bool with_state = mc.action_conditioned;

  std::ofstream log_file;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const std::string log_path = out_dir + "/loss_log.csv";
    const bool append = start_step > 0 && std::filesystem::exists(log_path);
    log_file.open(log_path, append ? std::ios::app : std::ios::out);
    if (!log_file) throw IoError("cannot open '" + log_path + "' for writing");
    if (!append) log_file << "step,train_loss,val_loss\n";
  }

  TrainResult result;
  std::vector<int> perm;
  std::int64_t perm_epoch = -1;

  auto save_ckpt = [&](const std::string& name, std::int64_t step) -> std::string {
    if (out_dir.empty()) return "";
    std::vector<std::pair<std::string, Tensor<T>>> tensors = model.params().items();
    for (size_t i = 0; i < model.params().items().size(); ++i) {
      tensors.emplace_back("adam.m." + model.params().items()[i].first, opt.m[i]);
      tensors.emplace_back("adam.v." + model.params().items()[i].first, opt.v[i]);
    }
    const std::string path = out_dir + "/" + name;
    save_checkpoint(path, mc, tensors, step, cfg.seed);
    return path;
  };

  for (std::int64_t step = start_step; step < cfg.max_steps; ++step) {
    // assemble the batch from the seeded epoch shuffle
    std::vector<int> idx(static_cast<size_t>(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b) {
      const std::int64_t counter = step * cfg.batch_size + b;
      const std::int64_t epoch = counter / n_train;
      if (epoch != perm_epoch) {
        perm = train_detail::epoch_permutation(loop_seed, epoch, n_train);
        perm_epoch = epoch;
      }
      idx[size_t(b)] = perm[size_t(counter % n_train)];
    }
    Rng step_rng(derive_seed(loop_seed, 0x2000 + std::uint64_t(step)));
    std::vector<int> offsets(static_cast<size_t>(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b) {
      const int slack = train_eps[size_t(idx[size_t(b)])].T - len;
      offsets[size_t(b)] = slack > 0 ? int(step_rng.next_below(std::uint64_t(slack + 1))) : 0;
    }

    Graph<T> g(true);
    Tensor<T> frames = pack_frames<T>(train_eps, idx, offsets, len);
    Tensor<T> init_state = pack_states_at<T>(train_eps, idx, offsets);
    Tensor<T> actions = pack_actions<T>(train_eps, idx, offsets, len);

    RolloutMode mode = RolloutMode::autoregressive();
    if (cfg.scheduled_sampling.kind != SamplingSchedule::Kind::kNone)
      mode = RolloutMode::scheduled(sampling_probability(step, cfg.scheduled_sampling));
    auto rollout =
        model.rollout(g, frames, init_state, actions, cfg.train_horizon, mode, &step_rng);

    std::vector<int> tgt_off = offsets;
    for (auto& o : tgt_off) o += T0;
    Tensor<T> tgt_frames = pack_frames<T>(train_eps, idx, tgt_off, cfg.train_horizon);
    Tensor<T> tgt_states = pack_states<T>(train_eps, idx, tgt_off, cfg.train_horizon);
    Tensor<T> loss = sequence_loss(g, rollout.predictions, tgt_frames, tgt_states,
                                   cfg.state_loss_weight, with_state);
    if (mc.include_context_loss && !rollout.context_predictions.empty()) {
      std::vector<int> ctx_off = offsets;
      for (auto& o : ctx_off) o += 1;
      Tensor<T> ctx_frames = pack_frames<T>(train_eps, idx, ctx_off, T0 - 1);
      Tensor<T> ctx_states = pack_states<T>(train_eps, idx, ctx_off, T0 - 1);
      Tensor<T> ctx_loss = sequence_loss(g, rollout.context_predictions, ctx_frames, ctx_states,
                                         cfg.state_loss_weight, with_state);
      loss = ops::add(g, loss, ctx_loss);
    }

    model.params().zero_grads();
    g.backward(loss);
    adam_step(model.params(), opt, cfg);

    LossLogEntry entry;
    entry.step = step + 1;
    entry.train_loss = double(loss.item());

    const bool do_val = !val_eps.empty() && ((step + 1) % cfg.val_interval == 0 ||
                                             step + 1 == cfg.max_steps);
    if (do_val) {
      auto [vt, vi] = validation_loss(model, val_eps, cfg);
      entry.has_val = true;
      entry.val_loss = vt;
      entry.val_image_loss = vi;
      if (vt < result.best_val_loss) {
        result.best_val_loss = vt;
        result.best_val_step = step + 1;
        result.best_checkpoint_path = save_ckpt("ckpt_best.vpck", step + 1);
      }
      if (verbose)
        std::printf("step %lld  train_loss %.6f  val_loss %.6f\n",
                    (long long)entry.step, entry.train_loss, vt);
    }
    if (log_file) {
      log_file << entry.step << "," << cfg_detail::fmt_double(entry.train_loss) << ",";
      if (entry.has_val) log_file << cfg_detail::fmt_double(entry.val_loss);
      log_file << "\n";
      log_file.flush();
    }
    result.log.push_back(entry);

    if (!out_dir.empty() &&
        ((step + 1) % cfg.checkpoint_interval == 0 || step + 1 == cfg.max_steps))
      result.final_checkpoint_path =
          save_ckpt("ckpt_step" + std::to_string(step + 1) + ".vpck", step + 1);
  }
  if (result.best_checkpoint_path.empty()) result.best_checkpoint_path = result.final_checkpoint_path;
  return result;
}

/// Restores model parameters and ADAM moments from a checkpoint. Returns the
/// step to resume from.
template <typename T>
std::int64_t restore_training(Predictor<T>& model, AdamState<T>& opt,
                              const LoadedCheckpoint<T>& ckpt) {
  restore_params(model, ckpt.tensors);
  const auto& items = model.params().items();
  check(opt.m.size() == items.size(), "restore_training: optimizer not initialized");
  for (size_t i = 0; i < items.size(); ++i) {
    const Tensor<T>* m = ckpt.tensors.find("adam.m." + items[i].first);
    const Tensor<T>* v = ckpt.tensors.find("adam.v." + items[i].first);
    check(m != nullptr && v != nullptr,
          "restore_training: checkpoint lacks optimizer moments for '" + items[i].first + "'");
    std::copy(m->data(), m->data() + m->numel(), opt.m[i].data());
    std::copy(v->data(), v->data() + v->numel(), opt.v[i].data());
  }
  opt.t = ckpt.step;
  return ckpt.step;
}

}  // namespace vp
