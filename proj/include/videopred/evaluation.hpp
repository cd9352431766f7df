#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "videopred/metrics.hpp"
#include "videopred/model.hpp"
#include "videopred/png_io.hpp"
#include "videopred/training.hpp"
#include "videopred/world.hpp"

// Evaluation protocol: autoregressive rollouts per episode, whole-image PSNR
// and SSIM at every future timestep, aggregated over the test split, plus the
// copy-last-frame baseline, action counterfactuals and the ablation harness.

namespace vp {

struct TimestepStats {
  double psnr_mean = 0, psnr_std = 0;
  double ssim_mean = 0, ssim_std = 0;
};

struct MetricsReport {
  std::string model_id;
  std::string split_id;
  int t_eval = 0;
  std::vector<TimestepStats> per_timestep;  // index 0 <-> t = 1

  /// Mean PSNR over timesteps t_from..t_to (1-based, inclusive).
  double mean_psnr(int t_from, int t_to) const {
    check(t_from >= 1 && t_to <= int(per_timestep.size()) && t_from <= t_to,
          "mean_psnr: bad range");
    double s = 0;
    for (int t = t_from; t <= t_to; ++t) s += per_timestep[size_t(t - 1)].psnr_mean;
    return s / (t_to - t_from + 1);
  }
};

namespace eval_detail {

/// Order-canonical mean/std: values are sorted before reduction so the
/// report is bit-identical under episode reordering.
inline std::pair<double, double> mean_std(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double sum = 0;
  for (double v : values) sum += v;
  const double mean = sum / double(values.size());
  double sq = 0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / double(values.size()))};
}

inline MetricsReport aggregate(std::vector<std::vector<double>>& psnr_t,
                               std::vector<std::vector<double>>& ssim_t,
                               const std::string& model_id, const std::string& split_id) {
  MetricsReport r;
  r.model_id = model_id;
  r.split_id = split_id;
  r.t_eval = int(psnr_t.size());
  for (size_t t = 0; t < psnr_t.size(); ++t) {
    TimestepStats s;
    std::tie(s.psnr_mean, s.psnr_std) = mean_std(psnr_t[t]);
    std::tie(s.ssim_mean, s.ssim_std) = mean_std(ssim_t[t]);
    r.per_timestep.push_back(s);
  }
  return r;
}

}  // namespace eval_detail

/// Per-timestep PSNR/SSIM of a model over a split, autoregressive rollouts
/// from each episode's first frames.
template <typename T>
MetricsReport evaluate_model(const Predictor<T>& model, const std::vector<Episode>& episodes,
                             int t_eval, int batch_size, const std::string& model_id,
                             const std::string& split_id) {
  check(!episodes.empty(), "evaluate: empty split");
  const int T0 = model.config().context_frames;
  for (const Episode& ep : episodes)
    check(ep.T >= T0 + t_eval, "evaluate: horizon " + std::to_string(t_eval) +
                                   " exceeds episode length " + std::to_string(ep.T) +
                                   " minus context " + std::to_string(T0));
  const int H = episodes[0].H, W = episodes[0].W;
  std::vector<std::vector<double>> psnr_t(static_cast<size_t>(t_eval)), ssim_t(static_cast<size_t>(t_eval));

  for (size_t start = 0; start < episodes.size(); start += size_t(batch_size)) {
    std::vector<int> idx, offsets;
    for (size_t i = start; i < std::min(episodes.size(), start + size_t(batch_size)); ++i) {
      idx.push_back(int(i));
      offsets.push_back(0);
    }
    Graph<T> g(false);
    const int len = T0 + t_eval;
    Tensor<T> frames = pack_frames<T>(episodes, idx, offsets, len);
    Tensor<T> init_state = pack_states_at<T>(episodes, idx, offsets);
    Tensor<T> actions = pack_actions<T>(episodes, idx, offsets, len);
    auto rollout =
        model.rollout(g, frames, init_state, actions, t_eval, RolloutMode::autoregressive());
    for (int t = 0; t < t_eval; ++t) {
      const Tensor<T>& pred = rollout.predictions[size_t(t)].image;
      for (size_t b = 0; b < idx.size(); ++b) {
        const Episode& ep = episodes[size_t(idx[b])];
        // compare in the model's CHW layout
        std::vector<float> gt(size_t(3) * H * W), pr(size_t(3) * H * W);
        const float* src = ep.frame(T0 + t);
        for (int p = 0; p < H * W; ++p)
          for (int c = 0; c < 3; ++c) gt[size_t(c) * H * W + size_t(p)] = src[p * 3 + c];
        const T* pd = pred.data() + std::int64_t(b) * 3 * H * W;
        for (std::int64_t i = 0; i < std::int64_t(3) * H * W; ++i) pr[size_t(i)] = float(pd[i]);
        psnr_t[size_t(t)].push_back(psnr(pr.data(), gt.data(), std::int64_t(3) * H * W));
        double sv = 0;
        for (int c = 0; c < 3; ++c)
          sv += ssim_channel(pr.data() + size_t(c) * H * W, gt.data() + size_t(c) * H * W, H, W,
                             1);
        ssim_t[size_t(t)].push_back(sv / 3.0);
      }
    }
  }
  return eval_detail::aggregate(psnr_t, ssim_t, model_id, split_id);
}

/// Copies the last context frame forward as every prediction.
inline MetricsReport evaluate_copy_baseline(const std::vector<Episode>& episodes,
                                            int context_frames, int t_eval,
                                            const std::string& split_id) {
  check(!episodes.empty(), "evaluate: empty split");
  for (const Episode& ep : episodes)
    check(ep.T >= context_frames + t_eval,
          "evaluate: horizon exceeds episode length minus context");
  std::vector<std::vector<double>> psnr_t(static_cast<size_t>(t_eval)), ssim_t(static_cast<size_t>(t_eval));
  for (const Episode& ep : episodes) {
    const float* last_ctx = ep.frame(context_frames - 1);
    const std::int64_t n = std::int64_t(ep.H) * ep.W * 3;
    for (int t = 0; t < t_eval; ++t) {
      const float* gt = ep.frame(context_frames + t);
      psnr_t[size_t(t)].push_back(psnr(last_ctx, gt, n));
      ssim_t[size_t(t)].push_back(ssim_hwc(last_ctx, gt, ep.H, ep.W));
    }
  }
  return eval_detail::aggregate(psnr_t, ssim_t, "copy", split_id);
}

// ---------------------------------------------------------------------------
// Action counterfactuals
// ---------------------------------------------------------------------------

/// Rolls an episode out under per-scale multiplied actions. Returns the
/// predicted frames per scale ([scale][t] -> [1,3,H,W]).
template <typename T>
std::vector<std::vector<Tensor<T>>> counterfactual_rollouts(const Predictor<T>& model,
                                                            const std::vector<Episode>& episodes,
                                                            int episode_index,
                                                            const std::vector<double>& scales,
                                                            int horizon) {
  check(model.config().action_conditioned,
        "action counterfactuals require an action-conditioned model");
  check(episode_index >= 0 && episode_index < int(episodes.size()),
        "episode index " + std::to_string(episode_index) + " out of range (split has " +
            std::to_string(episodes.size()) + " episodes)");
  const int T0 = model.config().context_frames;
  const int len = T0 + horizon;
  std::vector<std::vector<Tensor<T>>> out;
  for (double s : scales) {
    Graph<T> g(false);
    std::vector<int> idx = {episode_index};
    std::vector<int> offsets = {0};
    Tensor<T> frames = pack_frames<T>(episodes, idx, offsets, len);
    Tensor<T> init_state = pack_states_at<T>(episodes, idx, offsets);
    Tensor<T> actions = pack_actions<T>(episodes, idx, offsets, len);
    for (std::int64_t i = 0; i < actions.numel(); ++i) actions.data()[i] *= T(s);
    auto rollout =
        model.rollout(g, frames, init_state, actions, horizon, RolloutMode::autoregressive());
    std::vector<Tensor<T>> frames_out;
    for (auto& p : rollout.predictions) frames_out.push_back(p.image);
    out.push_back(std::move(frames_out));
  }
  return out;
}

/// Mean motion energy per scale over a set of episodes: mean |pred_t - last
/// context frame| over pixels, channels and timesteps, averaged over
/// episodes (canonical reduction order).
template <typename T>
std::vector<double> counterfactual_energies(const Predictor<T>& model,
                                            const std::vector<Episode>& episodes,
                                            const std::vector<double>& scales, int horizon) {
  check(model.config().action_conditioned,
        "action counterfactuals require an action-conditioned model");
  const int T0 = model.config().context_frames;
  std::vector<double> energies;
  for (double s : scales) {
    std::vector<double> per_ep;
    for (int e = 0; e < int(episodes.size()); ++e) {
      auto rollouts = counterfactual_rollouts(model, episodes, e, {s}, horizon);
      const Episode& ep = episodes[size_t(e)];
      const int H = ep.H, W = ep.W;
      std::vector<float> ctx(size_t(3) * H * W);
      const float* src = ep.frame(T0 - 1);
      for (int p = 0; p < H * W; ++p)
        for (int c = 0; c < 3; ++c) ctx[size_t(c) * H * W + size_t(p)] = src[p * 3 + c];
      double acc = 0;
      for (const Tensor<T>& pred : rollouts[0]) {
        double frame_acc = 0;
        for (std::int64_t i = 0; i < pred.numel(); ++i)
          frame_acc += std::abs(double(pred.data()[i]) - double(ctx[size_t(i)]));
        acc += frame_acc / double(pred.numel());
      }
      per_ep.push_back(acc / double(rollouts[0].size()));
    }
    energies.push_back(eval_detail::mean_std(std::move(per_ep)).first);
  }
  return energies;
}

// ---------------------------------------------------------------------------
// Ablation harness
// ---------------------------------------------------------------------------

struct AblationEntry {
  std::string name;
  ModelConfig model;
  TrainConfig train;
};

/// The built-in comparison set: the three advection variants, the no-action
/// and horizon-1 CDNA ablations, and the raw-pixel reconstruction ablation
/// (same trunk, head emits the frame directly).
inline std::vector<AblationEntry> builtin_ablation_variants(const ModelConfig& base,
                                                            const TrainConfig& train) {
  std::vector<AblationEntry> v;
  auto with_variant = [&](const std::string& name, Variant var) {
    AblationEntry e{name, base, train};
    e.model.variant = var;
    return e;
  };
  v.push_back(with_variant("cdna", Variant::kCDNA));
  v.push_back(with_variant("dna", Variant::kDNA));
  v.push_back(with_variant("stp", Variant::kSTP));
  AblationEntry no_action = with_variant("cdna-no-action", Variant::kCDNA);
  no_action.model.action_conditioned = false;
  v.push_back(no_action);
  AblationEntry h1 = with_variant("cdna-horizon1", Variant::kCDNA);
  h1.train.train_horizon = 1;
  v.push_back(h1);
  v.push_back(with_variant("raw", Variant::kRawPixel));
  return v;
}

template <typename T>
struct AblationReport {
  std::string name;
  MetricsReport seen;
  MetricsReport novel;
  double final_val_loss = 0;        // total validation loss at end of budget
  double final_val_image_loss = 0;  // image term only
};

/// Trains every variant under the same budget and seed, then evaluates on
/// the seen and novel splits.
template <typename T>
std::vector<AblationReport<T>> ablation_suite(const std::vector<AblationEntry>& entries,
                                              const std::vector<Episode>& train_eps,
                                              const std::vector<Episode>& val_eps,
                                              const std::vector<Episode>& test_seen,
                                              const std::vector<Episode>& test_novel, int t_eval,
                                              bool verbose = false) {
  std::vector<AblationReport<T>> reports;
  for (const AblationEntry& entry : entries) {
    if (verbose) std::printf("[ablation] training %s\n", entry.name.c_str());
    Predictor<T> model(entry.model, entry.train.seed);
    AdamState<T> opt = AdamState<T>::init(model.params());
    train(model, opt, train_eps, val_eps, entry.train);
    AblationReport<T> rep;
    rep.name = entry.name;
    auto [vt, vi] = validation_loss(model, val_eps, entry.train);
    rep.final_val_loss = vt;
    rep.final_val_image_loss = vi;
    rep.seen = evaluate_model(model, test_seen, t_eval, entry.train.batch_size, entry.name,
                              "test-seen");
    rep.novel = evaluate_model(model, test_novel, t_eval, entry.train.batch_size, entry.name,
                               "test-novel");
    reports.push_back(std::move(rep));
  }
  return reports;
}

// ---------------------------------------------------------------------------
// Artifact output
// ---------------------------------------------------------------------------

inline void write_metrics_csv(const MetricsReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "timestep,psnr_mean,psnr_std,ssim_mean,ssim_std\n";
  char buf[256];
  for (int t = 1; t <= r.t_eval; ++t) {
    const TimestepStats& s = r.per_timestep[size_t(t - 1)];
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f\n", t, s.psnr_mean, s.psnr_std,
                  s.ssim_mean, s.ssim_std);
    out << buf;
  }
}

inline std::string metrics_csv_name(const std::string& model_id, const std::string& split_id) {
  return model_id + "_" + split_id + "_metrics.csv";
}

inline std::string strip_png_name(const std::string& model_id, const std::string& split_id,
                                  int episode, double scale) {
  char sbuf[32];
  if (scale == std::floor(scale))
    std::snprintf(sbuf, sizeof(sbuf), "%d", int(scale));
  else
    std::snprintf(sbuf, sizeof(sbuf), "%g", scale);
  return model_id + "_" + split_id + "_ep" + std::to_string(episode) + "_scale" + sbuf + ".png";
}

/// Horizontal strip of [1,3,H,W] (or [3,H,W]) frames as one RGB PNG.
template <typename T>
void write_frame_strip(const std::vector<Tensor<T>>& frames, const std::string& path) {
  check(!frames.empty(), "write_frame_strip: no frames");
  Shape s = frames[0].shape();
  const int H = int(s[s.size() - 2]), W = int(s[s.size() - 1]);
  const int n = int(frames.size());
  std::vector<unsigned char> rgb(size_t(H) * W * n * 3);
  for (int i = 0; i < n; ++i) {
    const Tensor<T>& f = frames[size_t(i)];
    check_shape(f.numel() == std::int64_t(3) * H * W, "write_frame_strip: mixed frame shapes");
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        for (int c = 0; c < 3; ++c)
          rgb[(size_t(y) * W * n + size_t(i) * W + x) * 3 + size_t(c)] =
              to_byte(double(f.data()[(std::int64_t(c) * H + y) * W + x]));
  }
  write_png_rgb8(path, rgb.data(), H, W * n);
}

/// One mask channel as a full-range grayscale PNG.
template <typename T>
void write_mask_grayscale(const Tensor<T>& mask, std::int64_t channel, const std::string& path) {
  check_shape(mask.rank() == 4, "write_mask_grayscale: mask must be [B,C,H,W]");
  const std::int64_t C = mask.dim(1), H = mask.dim(2), W = mask.dim(3);
  check_shape(channel >= 0 && channel < C, "write_mask_grayscale: channel out of range");
  std::vector<unsigned char> rgb(size_t(H) * W * 3);
  for (std::int64_t p = 0; p < H * W; ++p) {
    const unsigned char v = to_byte(double(mask.data()[(channel * H * W) + p]));
    rgb[size_t(p) * 3 + 0] = rgb[size_t(p) * 3 + 1] = rgb[size_t(p) * 3 + 2] = v;
  }
  write_png_rgb8(path, rgb.data(), int(H), int(W));
}

/// Writes the report CSV plus one frame strip per provided rollout into
/// out_dir using the standard naming scheme.
template <typename T>
void emit_artifacts(const MetricsReport& report,
                    const std::vector<std::pair<int, std::vector<Tensor<T>>>>& rollouts,
                    const std::string& out_dir, double scale = 1.0) {
  std::filesystem::create_directories(out_dir);
  write_metrics_csv(report, out_dir + "/" + metrics_csv_name(report.model_id, report.split_id));
  for (const auto& [episode, frames] : rollouts)
    write_frame_strip(frames, out_dir + "/" + strip_png_name(report.model_id, report.split_id,
                                                             episode, scale));
}

}  // namespace vp
