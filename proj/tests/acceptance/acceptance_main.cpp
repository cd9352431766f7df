// Acceptance suite: one pass/fail line per criterion.
//
//  1  gradient-check suite (64-bit finite differences)
//  2  operator invariant suite
//  3  determinism and file-format round-trips
//  4  desk-scale learning: CDNA at 32x32 beats the copy baseline
//  5  novel-object generalization + motion-vs-reconstruction margin
//  6  action conditioning: no-action ablation and action counterfactuals
//  7  linear state-head accuracy at t=8
//  8  PSNR/SSIM metric oracles
//
// Criteria 5-7 reuse criterion 4's trained model; selecting one of them alone
// still triggers that training. Run with --criterion N[,M...] to restrict.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "videopred/videopred.hpp"

namespace {

using namespace vp;
using F = float;

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// ---------------------------------------------------------------------------
// Pinned experiment constants
// ---------------------------------------------------------------------------

constexpr std::uint64_t kWorldSeed = 907;
constexpr std::uint64_t kTrainSeed = 11;

// criterion 4: desk-scale CDNA at 32x32
constexpr int kDeskImage = 32;
constexpr int kDeskTrainEpisodes = 2106;  // 5% held out -> 2001 train / 105 val
constexpr int kDeskTestEpisodes = 64;
constexpr std::int64_t kDeskSteps = 2000;  // well under the 20k cap
constexpr double kSeenMarginDb = 1.0;
constexpr double kNovelMarginDb = 0.5;

// criteria 5b/6a: reduced fixed-budget comparison runs (3 seeds)
constexpr int kSmallImage = 16;
constexpr int kSmallTrainEpisodes = 220;
constexpr int kSmallTestEpisodes = 32;
constexpr std::int64_t kSmallSteps = 600;
constexpr int kComparisonSeeds = 3;

WorldConfig desk_world() {
  WorldConfig wc;
  wc.image_h = wc.image_w = kDeskImage;
  wc.num_objects = 4;
  wc.pusher_radius = 0.06;
  wc.max_action = 0.07;
  wc.episode_length = 12;
  wc.seed = kWorldSeed;
  return wc;
}

ModelConfig desk_model() {
  ModelConfig mc;
  mc.variant = Variant::kCDNA;
  mc.image_h = mc.image_w = kDeskImage;
  mc.channel_widths = {16, 16, 16, 32, 32, 64, 32, 16};
  mc.num_transforms = 10;
  mc.kernel_size = 5;
  mc.context_frames = 2;
  // penalizing the warm-up prediction anchors the state head's one-step
  // fit, without which the 8-step recurrence trains poorly
  mc.include_context_loss = true;
  return mc;
}

TrainConfig desk_train() {
  TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.batch_size = 8;
  tc.train_horizon = 8;
  tc.context_frames = 2;
  tc.max_steps = kDeskSteps;
  tc.scheduled_sampling = SamplingSchedule::linear(1.0, 0.0, kDeskSteps / 2);
  tc.state_loss_weight = 1e-2;
  tc.seed = kTrainSeed;
  tc.val_interval = 200;
  tc.checkpoint_interval = kDeskSteps;
  return tc;
}

WorldConfig small_world() {
  WorldConfig wc;
  wc.image_h = wc.image_w = kSmallImage;
  wc.num_objects = 2;
  wc.pusher_radius = 0.12;
  wc.max_action = 0.09;
  wc.episode_length = 12;
  wc.seed = kWorldSeed + 1;
  return wc;
}

ModelConfig small_model() {
  ModelConfig mc;
  mc.variant = Variant::kCDNA;
  mc.image_h = mc.image_w = kSmallImage;
  mc.channel_widths = {8, 8, 8, 12, 12, 16, 12, 8};
  mc.num_transforms = 5;
  mc.kernel_size = 5;
  mc.context_frames = 2;
  mc.include_context_loss = true;
  return mc;
}

TrainConfig small_train(std::uint64_t seed) {
  TrainConfig tc;
  tc.batch_size = 8;
  tc.train_horizon = 8;
  tc.max_steps = kSmallSteps;
  tc.scheduled_sampling = SamplingSchedule::linear(1.0, 0.0, kSmallSteps / 2);
  tc.seed = seed;
  tc.val_interval = kSmallSteps;
  tc.checkpoint_interval = kSmallSteps;
  tc.val_max_episodes = 16;
  return tc;
}

// ---------------------------------------------------------------------------
// Shared state across criteria (built lazily)
// ---------------------------------------------------------------------------

struct Shared {
  // desk-scale datasets and the criterion-4 model
  std::vector<Episode> train_eps, val_eps, seen_eps, novel_eps;
  std::unique_ptr<Predictor<F>> model;

  // reduced-budget datasets and per-seed comparison models
  std::vector<Episode> s_train, s_val, s_seen, s_novel;
  std::vector<std::unique_ptr<Predictor<F>>> cdna_runs, raw_runs, noact_runs;
  std::vector<double> cdna_val_img, noact_val_img;

  void ensure_desk_data() {
    if (!train_eps.empty()) return;
    std::printf("  [setup] generating %d desk-scale episodes...\n",
                kDeskTrainEpisodes + 2 * kDeskTestEpisodes);
    std::fflush(stdout);
    DatasetSplits s = make_splits(desk_world(), kDeskTrainEpisodes, kDeskTestEpisodes);
    train_eps = generate_split(s.train);
    val_eps = generate_split(s.validation);
    seen_eps = generate_split(s.test_seen);
    novel_eps = generate_split(s.test_novel);
  }

  void ensure_desk_model() {
    if (model) return;
    ensure_desk_data();
    std::printf("  [setup] training criterion-4 CDNA model (%lld steps, batch 8)...\n",
                (long long)kDeskSteps);
    std::fflush(stdout);
    const double t0 = now_s();
    model = std::make_unique<Predictor<F>>(desk_model(), kTrainSeed);
    AdamState<F> opt = AdamState<F>::init(model->params());
    TrainResult res = train(*model, opt, train_eps, val_eps, desk_train(), "", 0, true);
    std::printf("  [setup] training done in %.0fs (first loss %.5f, last %.5f)\n",
                now_s() - t0, res.log.front().train_loss, res.log.back().train_loss);
    std::fflush(stdout);
  }

  void ensure_small_data() {
    if (!s_train.empty()) return;
    DatasetSplits s = make_splits(small_world(), kSmallTrainEpisodes, kSmallTestEpisodes);
    s_train = generate_split(s.train);
    s_val = generate_split(s.validation);
    s_seen = generate_split(s.test_seen);
    s_novel = generate_split(s.test_novel);
  }

  void ensure_comparison_runs() {
    if (!cdna_runs.empty()) return;
    ensure_small_data();
    for (int s = 0; s < kComparisonSeeds; ++s) {
      const std::uint64_t seed = 100 + std::uint64_t(s);
      std::printf("  [setup] reduced-budget runs, seed %llu (cdna / raw / no-action)...\n",
                  (unsigned long long)seed);
      std::fflush(stdout);
      {
        auto m = std::make_unique<Predictor<F>>(small_model(), seed);
        AdamState<F> opt = AdamState<F>::init(m->params());
        train(*m, opt, s_train, s_val, small_train(seed));
        auto [vt, vi] = validation_loss(*m, s_val, small_train(seed));
        cdna_val_img.push_back(vi);
        cdna_runs.push_back(std::move(m));
      }
      {
        ModelConfig mc = small_model();
        mc.variant = Variant::kRawPixel;
        auto m = std::make_unique<Predictor<F>>(mc, seed);
        AdamState<F> opt = AdamState<F>::init(m->params());
        train(*m, opt, s_train, s_val, small_train(seed));
        raw_runs.push_back(std::move(m));
      }
      {
        ModelConfig mc = small_model();
        mc.action_conditioned = false;
        auto m = std::make_unique<Predictor<F>>(mc, seed);
        AdamState<F> opt = AdamState<F>::init(m->params());
        train(*m, opt, s_train, s_val, small_train(seed));
        auto [vt, vi] = validation_loss(*m, s_val, small_train(seed));
        noact_val_img.push_back(vi);
        noact_runs.push_back(std::move(m));
      }
    }
  }
};

Shared g_shared;

// ---------------------------------------------------------------------------
// criterion 1: gradient-check suite
// ---------------------------------------------------------------------------

/// Max normalized FD error over every coordinate of the given inputs.
double fd_check(const std::function<Tensor<double>(Graph<double>&)>& loss_fn,
                std::vector<Tensor<double>> inputs, double eps = 1e-5, int sample = 0,
                Rng* rng = nullptr) {
  Graph<double> g(true);
  Tensor<double> loss = loss_fn(g);
  for (auto& t : inputs) t.zero_grad();
  g.backward(loss);
  double max_err = 0;
  for (auto& x : inputs) {
    std::vector<std::int64_t> coords;
    if (sample > 0) {
      for (int s = 0; s < sample; ++s)
        coords.push_back(std::int64_t(rng->next_below(std::uint64_t(x.numel()))));
    } else {
      for (std::int64_t i = 0; i < x.numel(); ++i) coords.push_back(i);
    }
    for (std::int64_t i : coords) {
      const double orig = x.data()[i];
      x.data()[i] = orig + eps;
      Graph<double> gp(false);
      const double lp = loss_fn(gp).item();
      x.data()[i] = orig - eps;
      Graph<double> gm(false);
      const double lm = loss_fn(gm).item();
      x.data()[i] = orig;
      const double fd = (lp - lm) / (2 * eps);
      const double an = x.has_grad() ? x.grad()[i] : 0.0;
      const double denom = std::max({1.0, std::abs(an), std::abs(fd)});
      max_err = std::max(max_err, std::abs(an - fd) / denom);
    }
  }
  return max_err;
}

Tensor<double> rnd(Shape s, Rng& rng, double lo = -1, double hi = 1) {
  return Tensor<double>::uniform(std::move(s), rng, lo, hi, true);
}

/// Resamples entries of x away from zero (relu kink) by at least margin.
void avoid_kink(Tensor<double>& x, double margin = 1e-3) {
  for (std::int64_t i = 0; i < x.numel(); ++i)
    if (std::abs(x.data()[i]) < margin) x.data()[i] = x.data()[i] < 0 ? -margin : margin;
}

bool criterion1(std::string& detail) {
  const double t0 = now_s();
  Rng rng(71);
  double worst = 0;
  std::string worst_op = "none";
  auto track = [&](const char* op, double err) {
    if (err > worst) {
      worst = err;
      worst_op = op;
    }
  };

  {
    Tensor<double> x = rnd({2, 2, 5, 5}, rng), w = rnd({3, 2, 3, 3}, rng), b = rnd({3}, rng);
    track("conv2d", fd_check(
                        [&](Graph<double>& g) {
                          return ops::sum_all(g, ops::sigmoid(g, ops::conv2d(g, x, w, b, 2)));
                        },
                        {x, w, b}));
  }
  {
    Tensor<double> x = rnd({2, 4}, rng), w = rnd({3, 4}, rng), b = rnd({3}, rng);
    track("dense", fd_check(
                       [&](Graph<double>& g) {
                         return ops::sum_all(g, ops::tanh(g, ops::dense(g, x, w, b)));
                       },
                       {x, w, b}));
  }
  {
    Tensor<double> a = rnd({3, 4}, rng), b = rnd({3, 4}, rng);
    track("add/sub/mul", fd_check(
                             [&](Graph<double>& g) {
                               Tensor<double> s = ops::mul(g, ops::add(g, a, b), ops::sub(g, a, b));
                               return ops::sum_all(g, ops::mul(g, s, s));
                             },
                             {a, b}));
    track("sigmoid", fd_check(
                         [&](Graph<double>& g) {
                           return ops::sum_all(g, ops::sigmoid(g, ops::mul(g, a, b)));
                         },
                         {a, b}));
    track("tanh", fd_check(
                      [&](Graph<double>& g) { return ops::sum_all(g, ops::tanh(g, a)); }, {a}));
    Tensor<double> r = rnd({4, 4}, rng);
    avoid_kink(r);
    track("relu", fd_check(
                      [&](Graph<double>& g) {
                        return ops::sum_all(g, ops::mul(g, ops::relu(g, r), r));
                      },
                      {r}));
  }
  {
    Tensor<double> x = rnd({2, 5, 3}, rng, -2, 2), w = rnd({2, 5, 3}, rng);
    track("softmax_axis", fd_check(
                              [&](Graph<double>& g) {
                                return ops::sum_all(g, ops::mul(g, ops::softmax_axis(g, x, 1), w));
                              },
                              {x}));
  }
  {
    Tensor<double> x = rnd({1, 2, 3, 4}, rng), w = rnd({1, 2, 6, 8}, rng);
    track("resize2x", fd_check(
                          [&](Graph<double>& g) {
                            return ops::sum_all(g, ops::mul(g, ops::upsample2x(g, x), w));
                          },
                          {x}));
  }
  {
    const std::int64_t C = 2, H = 3, W = 3;
    Tensor<double> x = rnd({1, 2, H, W}, rng), h0 = rnd({1, C, H, W}, rng),
                   c0 = rnd({1, C, H, W}, rng);
    Tensor<double> w = rnd({4 * C, 2 + C, 5, 5}, rng, -0.3, 0.3), b = rnd({4 * C}, rng, -0.1, 0.1);
    track("conv_lstm_cell",
          fd_check(
              [&](Graph<double>& g) {
                auto [h, st] = ops::conv_lstm_cell(g, x, LstmState<double>{h0, c0}, w, b);
                return ops::sum_all(g, ops::mul(g, h, h));
              },
              {x, h0, c0, w, b}));
  }
  {
    // apply_dna via normalize_dna so kernels stay on the normalized manifold
    Tensor<double> prev = rnd({1, 2, 5, 5}, rng, 0, 1), raw = rnd({1, 9, 5, 5}, rng, -2, 2);
    avoid_kink(raw, 5e-3);
    Tensor<double> w = rnd({1, 2, 5, 5}, rng);
    track("apply_dna", fd_check(
                           [&](Graph<double>& g) {
                             KernelMap<double> m = ops::normalize_dna(g, raw, 3);
                             return ops::sum_all(g, ops::mul(g, ops::apply_dna(g, prev, m), w));
                           },
                           {prev, raw}));
  }
  {
    Tensor<double> prev = rnd({2, 2, 5, 5}, rng, 0, 1), raw = rnd({2, 2, 9}, rng, -2, 2);
    Tensor<double> w = rnd({2, 2, 2, 5, 5}, rng);
    track("apply_cdna", fd_check(
                            [&](Graph<double>& g) {
                              KernelSet<double> m = ops::normalize_cdna(g, raw, 3);
                              return ops::sum_all(g, ops::mul(g, ops::apply_cdna(g, prev, m), w));
                            },
                            {prev, raw}));
  }
  {
    // affines verified fractional everywhere on the 5x5 grid (sampling-cell
    // boundaries are the operator's non-differentiable set)
    Tensor<double> prev = rnd({1, 2, 5, 5}, rng, 0, 1);
    Tensor<double> M = Tensor<double>::from_data(
        {1, 2, 2, 3}, {1.0936, -0.0140, 0.2330, 0.0832, 1.0966, 0.2105,
                       0.8569, 0.0061, -0.1960, -0.0280, 1.0235, -0.0929},
        true);
    Tensor<double> w = rnd({1, 2, 2, 5, 5}, rng);
    track("apply_stp",
          fd_check(
              [&](Graph<double>& g) {
                return ops::sum_all(g, ops::mul(g, ops::apply_stp(g, prev, AffineSet<double>{M}), w));
              },
              {prev, M}));
  }
  {
    Tensor<double> prev = rnd({1, 2, 4, 4}, rng, 0, 1), tr = rnd({1, 2, 2, 4, 4}, rng, 0, 1);
    Tensor<double> gen = rnd({1, 2, 4, 4}, rng, 0, 1), logits = rnd({1, 4, 4, 4}, rng);
    Tensor<double> w = rnd({1, 2, 4, 4}, rng);
    track("composite", fd_check(
                           [&](Graph<double>& g) {
                             auto res = ops::composite(g, prev, tr, gen, logits);
                             return ops::sum_all(g, ops::mul(g, res.image, w));
                           },
                           {prev, tr, gen, logits}));
  }
  const bool ops_ok = worst < 1e-5;

  // end-to-end: rollout + sequence_loss on a 16x16 reduced model, sampled
  // coordinates from every parameter tensor
  ModelConfig mc;
  mc.variant = Variant::kCDNA;
  mc.image_h = mc.image_w = 16;
  mc.channel_widths = {4, 4, 4, 6, 6, 8, 6, 4};
  mc.num_transforms = 3;
  mc.kernel_size = 3;
  Predictor<double> model(mc, 72);
  Tensor<double> frames = Tensor<double>::uniform({1, 4, 3, 16, 16}, rng, 0.0, 1.0);
  Tensor<double> init_state = Tensor<double>::uniform({1, 2}, rng, -1.0, 1.0);
  Tensor<double> actions = Tensor<double>::uniform({1, 4, 2}, rng, -0.2, 0.2);
  Tensor<double> tgt_f = Tensor<double>::uniform({1, 2, 3, 16, 16}, rng, 0.0, 1.0);
  Tensor<double> tgt_s = Tensor<double>::uniform({1, 2, 2}, rng, -1.0, 1.0);
  auto loss_fn = [&](Graph<double>& g) {
    auto ro = model.rollout(g, frames, init_state, actions, 2, RolloutMode::autoregressive());
    return sequence_loss(g, ro.predictions, tgt_f, tgt_s, 1e-2, true);
  };
  std::vector<Tensor<double>> probes;
  for (auto& [name, t] : model.params().items()) probes.push_back(t);
  model.params().zero_grads();
  Rng crng(73);
  const double e2e = fd_check(loss_fn, probes, 1e-5, 2, &crng);
  const bool e2e_ok = e2e < 1e-4;

  const double dt = now_s() - t0;
  std::ostringstream os;
  os << "max op error " << worst << " (" << worst_op << ", limit 1e-5), end-to-end " << e2e
     << " (limit 1e-4), " << dt << "s (limit 300s)";
  detail = os.str();
  return ops_ok && e2e_ok && dt < 300.0;
}

// ---------------------------------------------------------------------------
// criterion 2: operator invariants
// ---------------------------------------------------------------------------

bool criterion2(std::string& detail) {
  const double t0 = now_s();
  Rng rng(81);
  bool ok = true;
  std::ostringstream os;

  // identity-kernel DNA/CDNA reproduce inputs exactly
  {
    Graph<double> g(false);
    Tensor<double> prev = Tensor<double>::uniform({2, 3, 8, 8}, rng, 0.0, 1.0);
    Tensor<double> km({2, 5, 5, 8, 8});
    for (std::int64_t b = 0; b < 2; ++b)
      for (std::int64_t p = 0; p < 64; ++p) km.data()[(b * 25 + 12) * 64 + p] = 1.0;
    Tensor<double> out = ops::apply_dna(g, prev, KernelMap<double>{km});
    bool exact = true;
    for (std::int64_t i = 0; i < out.numel(); ++i) exact &= out.data()[i] == prev.data()[i];
    Tensor<double> ks({2, 4, 5, 5});
    for (std::int64_t i = 0; i < 8; ++i) ks.data()[i * 25 + 12] = 1.0;
    Tensor<double> out2 = ops::apply_cdna(g, prev, KernelSet<double>{ks});
    for (std::int64_t b = 0; b < 2; ++b)
      for (std::int64_t n = 0; n < 4; ++n)
        for (std::int64_t i = 0; i < 3 * 64; ++i)
          exact &= out2.data()[(b * 4 + n) * 3 * 64 + i] == prev.data()[b * 3 * 64 + i];
    // identity affine
    Tensor<double> M({2, 2, 2, 3});
    for (std::int64_t bn = 0; bn < 4; ++bn) {
      M.data()[bn * 6 + 0] = 1.0;
      M.data()[bn * 6 + 4] = 1.0;
    }
    Tensor<double> out3 = ops::apply_stp(g, prev, AffineSet<double>{M});
    for (std::int64_t b = 0; b < 2; ++b)
      for (std::int64_t n = 0; n < 2; ++n)
        for (std::int64_t i = 0; i < 3 * 64; ++i)
          exact &= out3.data()[(b * 2 + n) * 3 * 64 + i] == prev.data()[b * 3 * 64 + i];
    if (!exact) {
      ok = false;
      os << "[identity not exact] ";
    }
  }

  // constant preservation under arbitrary normalized kernels
  {
    Graph<double> g(false);
    Tensor<double> prev = Tensor<double>::full({1, 3, 8, 8}, 0.437);
    Tensor<double> raw = Tensor<double>::uniform({1, 25, 8, 8}, rng, -2.0, 2.0);
    Tensor<double> out = ops::apply_dna(g, prev, ops::normalize_dna(g, raw, 5));
    double worst = 0;
    for (std::int64_t i = 0; i < out.numel(); ++i)
      worst = std::max(worst, std::abs(out.data()[i] - 0.437));
    Tensor<double> raw2 = Tensor<double>::uniform({1, 4, 25}, rng, -2.0, 2.0);
    Tensor<double> out2 = ops::apply_cdna(g, prev, ops::normalize_cdna(g, raw2, 5));
    for (std::int64_t i = 0; i < out2.numel(); ++i)
      worst = std::max(worst, std::abs(out2.data()[i] - 0.437));
    // composited (no generated channel): still constant
    Tensor<double> logits = Tensor<double>::uniform({1, 5, 8, 8}, rng, -2.0, 2.0);
    auto res = ops::composite(g, prev, out2, std::nullopt, logits);
    for (std::int64_t i = 0; i < res.image.numel(); ++i)
      worst = std::max(worst, std::abs(res.image.data()[i] - 0.437));
    if (worst > 1e-5) {
      ok = false;
      os << "[constant drift " << worst << "] ";
    }
  }

  // normalized kernels and masks sum to 1 +- 1e-5
  {
    Graph<double> g(false);
    Tensor<double> raw = Tensor<double>::uniform({2, 25, 6, 6}, rng, -3.0, 3.0);
    KernelMap<double> km = ops::normalize_dna(g, raw, 5);
    double worst = 0;
    for (std::int64_t b = 0; b < 2; ++b)
      for (std::int64_t p = 0; p < 36; ++p) {
        double s = 0;
        for (std::int64_t t = 0; t < 25; ++t) s += km.values.data()[(b * 25 + t) * 36 + p];
        worst = std::max(worst, std::abs(s - 1.0));
      }
    Tensor<double> raw2 = Tensor<double>::uniform({2, 10, 25}, rng, -3.0, 3.0);
    KernelSet<double> kset = ops::normalize_cdna(g, raw2, 5);
    for (std::int64_t i = 0; i < 20; ++i) {
      double s = 0;
      for (std::int64_t t = 0; t < 25; ++t) s += kset.values.data()[i * 25 + t];
      worst = std::max(worst, std::abs(s - 1.0));
    }
    Tensor<double> prev = Tensor<double>::uniform({1, 3, 6, 6}, rng, 0.0, 1.0);
    Tensor<double> tr = Tensor<double>::uniform({1, 2, 3, 6, 6}, rng, 0.0, 1.0);
    Tensor<double> logits = Tensor<double>::uniform({1, 3, 6, 6}, rng, -4.0, 4.0);
    auto res = ops::composite(g, prev, tr, std::nullopt, logits);
    for (std::int64_t p = 0; p < 36; ++p) {
      double s = 0;
      for (std::int64_t c = 0; c < 3; ++c) s += res.mask.values.data()[c * 36 + p];
      worst = std::max(worst, std::abs(s - 1.0));
    }
    if (worst > 1e-5) {
      ok = false;
      os << "[mass drift " << worst << "] ";
    }
  }

  // composited output bounded by candidate envelope
  {
    Graph<double> g(false);
    double worst = 0;
    for (int trial = 0; trial < 10; ++trial) {
      Tensor<double> prev = Tensor<double>::uniform({1, 3, 6, 6}, rng, 0.0, 1.0);
      Tensor<double> tr = Tensor<double>::uniform({1, 3, 3, 6, 6}, rng, 0.0, 1.0);
      Tensor<double> logits = Tensor<double>::uniform({1, 4, 6, 6}, rng, -5.0, 5.0);
      auto res = ops::composite(g, prev, tr, std::nullopt, logits);
      for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t p = 0; p < 36; ++p) {
          double lo = prev.data()[c * 36 + p], hi = lo;
          for (std::int64_t n = 0; n < 3; ++n) {
            const double v = tr.data()[(n * 3 + c) * 36 + p];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
          }
          const double got = res.image.data()[c * 36 + p];
          worst = std::max({worst, lo - got, got - hi});
        }
    }
    if (worst > 1e-5) {
      ok = false;
      os << "[envelope violation " << worst << "] ";
    }
  }

  // DNA == CDNA on replicated kernels
  {
    Graph<double> g(false);
    Tensor<double> prev = Tensor<double>::uniform({2, 3, 8, 8}, rng, 0.0, 1.0);
    Tensor<double> raw = Tensor<double>::uniform({2, 1, 25}, rng, -2.0, 2.0);
    KernelSet<double> kset = ops::normalize_cdna(g, raw, 5);
    Tensor<double> km({2, 5, 5, 8, 8});
    for (std::int64_t b = 0; b < 2; ++b)
      for (std::int64_t t = 0; t < 25; ++t)
        for (std::int64_t p = 0; p < 64; ++p)
          km.data()[(b * 25 + t) * 64 + p] = kset.values.data()[b * 25 + t];
    Tensor<double> a = ops::apply_cdna(g, prev, kset);
    Tensor<double> b = ops::apply_dna(g, prev, KernelMap<double>{km});
    const double diff = max_abs_diff(a.reshaped({2, 3, 8, 8}), b);
    if (diff > 1e-6) {
      ok = false;
      os << "[dna/cdna diff " << diff << "] ";
    }
  }

  const double dt = now_s() - t0;
  if (os.str().empty()) os << "all invariants hold";
  os << ", " << dt << "s (limit 60s)";
  detail = os.str();
  return ok && dt < 60.0;
}

// ---------------------------------------------------------------------------
// criterion 3: determinism & round-trips
// ---------------------------------------------------------------------------

bool criterion3(std::string& detail) {
  Rng rng(91);
  std::ostringstream os;
  bool ok = true;
  const std::string dir =
      (std::filesystem::temp_directory_path() / "vp_acceptance_c3").string();
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);

  WorldConfig wc = small_world();
  wc.object_catalog = seen_object_pool();

  // same-seed generation
  {
    Episode a = generate_episode(wc, 4242), b = generate_episode(wc, 4242);
    bool same = a.images == b.images && a.states == b.states && a.actions == b.actions;
    if (!same) {
      ok = false;
      os << "[episode generation not deterministic] ";
    }
  }

  // VPDS round-trip
  {
    std::vector<Episode> eps;
    for (int i = 0; i < 3; ++i) eps.push_back(generate_episode(wc, 100 + i));
    write_dataset(eps, dir + "/d.vpds");
    std::vector<Episode> back = read_dataset(dir + "/d.vpds");
    bool same = back.size() == eps.size();
    for (size_t e = 0; same && e < eps.size(); ++e)
      same = back[e].images == eps[e].images && back[e].states == eps[e].states &&
             back[e].actions == eps[e].actions;
    if (!same) {
      ok = false;
      os << "[VPDS round-trip not bit-exact] ";
    }
  }

  // checkpoint save/load-resume bit-identity
  {
    std::vector<Episode> eps;
    for (int i = 0; i < 6; ++i) eps.push_back(generate_episode(wc, 300 + i));
    ModelConfig mc = small_model();
    TrainConfig tc = small_train(7);
    tc.max_steps = 6;
    tc.checkpoint_interval = 3;

    Predictor<F> a(mc, 7);
    AdamState<F> opt_a = AdamState<F>::init(a.params());
    train(a, opt_a, eps, {}, tc, dir + "/run_a");

    TrainConfig tc3 = tc;
    tc3.max_steps = 3;
    Predictor<F> b(mc, 7);
    AdamState<F> opt_b = AdamState<F>::init(b.params());
    train(b, opt_b, eps, {}, tc3, dir + "/run_b");
    Predictor<F> c(mc, 7);
    AdamState<F> opt_c = AdamState<F>::init(c.params());
    LoadedCheckpoint<F> ckpt = load_checkpoint<F>(dir + "/run_b/ckpt_step3.vpck");
    const std::int64_t start = restore_training(c, opt_c, ckpt);
    train(c, opt_c, eps, {}, tc, dir + "/run_b", start);
    bool same = true;
    for (size_t i = 0; same && i < a.params().items().size(); ++i) {
      const auto& ta = a.params().items()[i].second;
      const auto& tcn = c.params().items()[i].second;
      for (std::int64_t j = 0; same && j < ta.numel(); ++j)
        same = ta.data()[j] == tcn.data()[j];
    }
    if (!same) {
      ok = false;
      os << "[checkpoint resume not bit-identical] ";
    }

    // repeated evaluation
    std::vector<Episode> test;
    for (int i = 0; i < 4; ++i) test.push_back(generate_episode(wc, 900 + i));
    MetricsReport r1 = evaluate_model(a, test, 4, 2, "m", "s");
    MetricsReport r2 = evaluate_model(a, test, 4, 2, "m", "s");
    for (int t = 0; t < 4; ++t) {
      same = r1.per_timestep[size_t(t)].psnr_mean == r2.per_timestep[size_t(t)].psnr_mean &&
             r1.per_timestep[size_t(t)].ssim_mean == r2.per_timestep[size_t(t)].ssim_mean;
      if (!same) break;
    }
    if (!same) {
      ok = false;
      os << "[evaluation not deterministic] ";
    }
  }
  std::filesystem::remove_all(dir);
  if (os.str().empty()) os << "episode generation, VPDS, VPCK resume and evaluation bit-identical";
  detail = os.str();
  return ok;
}

// ---------------------------------------------------------------------------
// criterion 4: desk-scale learning
// ---------------------------------------------------------------------------

bool criterion4(std::string& detail) {
  g_shared.ensure_desk_model();
  MetricsReport copy = evaluate_copy_baseline(g_shared.seen_eps, 2, 8, "test-seen");
  MetricsReport model = evaluate_model(*g_shared.model, g_shared.seen_eps, 8, 8, "cdna",
                                       "test-seen");
  const double margin = model.mean_psnr(1, 8) - copy.mean_psnr(1, 8);
  std::ostringstream os;
  os << "seen split t1-8: model " << model.mean_psnr(1, 8) << " dB vs copy "
     << copy.mean_psnr(1, 8) << " dB, margin " << margin << " dB (need >= " << kSeenMarginDb
     << "); quality over time t1 " << model.per_timestep[0].psnr_mean << " dB -> t8 "
     << model.per_timestep[7].psnr_mean << " dB";
  detail = os.str();
  return margin >= kSeenMarginDb;
}

// ---------------------------------------------------------------------------
// criterion 5: novel-object generalization
// ---------------------------------------------------------------------------

bool criterion5(std::string& detail) {
  g_shared.ensure_desk_model();
  MetricsReport copy = evaluate_copy_baseline(g_shared.novel_eps, 2, 5, "test-novel");
  MetricsReport model = evaluate_model(*g_shared.model, g_shared.novel_eps, 5, 8, "cdna",
                                       "test-novel");
  const double margin = model.mean_psnr(1, 5) - copy.mean_psnr(1, 5);

  g_shared.ensure_comparison_runs();
  double motion_margin = 0;
  for (int s = 0; s < kComparisonSeeds; ++s) {
    MetricsReport mr = evaluate_model(*g_shared.cdna_runs[size_t(s)], g_shared.s_novel, 5, 8,
                                      "cdna", "novel");
    MetricsReport rr = evaluate_model(*g_shared.raw_runs[size_t(s)], g_shared.s_novel, 5, 8,
                                      "raw", "novel");
    motion_margin += mr.mean_psnr(1, 5) - rr.mean_psnr(1, 5);
  }
  motion_margin /= kComparisonSeeds;

  std::ostringstream os;
  os << "novel t1-5: model " << model.mean_psnr(1, 5) << " dB vs copy " << copy.mean_psnr(1, 5)
     << " dB, margin " << margin << " dB (need >= " << kNovelMarginDb
     << "); motion-vs-reconstruction margin " << motion_margin << " dB over "
     << kComparisonSeeds << " seeds (need >= 0)";
  detail = os.str();
  return margin >= kNovelMarginDb && motion_margin >= 0.0;
}

// ---------------------------------------------------------------------------
// criterion 6: action conditioning
// ---------------------------------------------------------------------------

bool criterion6(std::string& detail) {
  g_shared.ensure_comparison_runs();
  double act = 0, noact = 0;
  for (int s = 0; s < kComparisonSeeds; ++s) {
    act += g_shared.cdna_val_img[size_t(s)];
    noact += g_shared.noact_val_img[size_t(s)];
  }
  act /= kComparisonSeeds;
  noact /= kComparisonSeeds;
  const bool ablation_ok = noact >= act;

  g_shared.ensure_desk_model();
  std::vector<Episode> subset(g_shared.seen_eps.begin(), g_shared.seen_eps.begin() + 24);
  std::vector<double> energies =
      counterfactual_energies(*g_shared.model, subset, {0.0, 1.0, 1.5}, 8);
  const bool monotone = energies[0] <= energies[1] && energies[1] <= energies[2];
  const bool zero_still = energies[0] < 0.5 * energies[1];

  std::ostringstream os;
  os << "no-action val image loss " << noact << " vs action " << act
     << " (need no-action >= action); motion energy at scales {0,1,1.5} = {" << energies[0]
     << ", " << energies[1] << ", " << energies[2]
     << "} (need monotone, E0 < 0.5*E1)";
  detail = os.str();
  return ablation_ok && monotone && zero_still;
}

// ---------------------------------------------------------------------------
// criterion 7: state prediction
// ---------------------------------------------------------------------------

bool criterion7(std::string& detail) {
  g_shared.ensure_desk_model();
  const auto& eps = g_shared.seen_eps;
  double total = 0;
  int count = 0;
  for (size_t start = 0; start < eps.size(); start += 8) {
    std::vector<int> idx, off;
    for (size_t i = start; i < std::min(eps.size(), start + 8); ++i) {
      idx.push_back(int(i));
      off.push_back(0);
    }
    Graph<F> g(false);
    auto frames = pack_frames<F>(eps, idx, off, 10);
    auto init_state = pack_states_at<F>(eps, idx, off);
    auto actions = pack_actions<F>(eps, idx, off, 10);
    auto ro = g_shared.model->rollout(g, frames, init_state, actions, 8,
                                      RolloutMode::autoregressive());
    const Tensor<F>& s8 = ro.predictions[7].state;
    for (size_t b = 0; b < idx.size(); ++b) {
      const Episode& ep = eps[size_t(idx[size_t(b)])];
      for (int d = 0; d < 2; ++d) {
        total += std::abs(double(s8.data()[std::int64_t(b) * 2 + d]) -
                          double(ep.states[size_t(9) * 2 + size_t(d)]));
        ++count;
      }
    }
  }
  const double mae = total / count;
  std::ostringstream os;
  os << "state MAE at t=8 over seen split: " << mae << " (need < 0.05)";
  detail = os.str();
  return mae < 0.05;
}

// ---------------------------------------------------------------------------
// criterion 8: metric oracles
// ---------------------------------------------------------------------------

bool criterion8(std::string& detail) {
  Rng rng(101);
  double worst_psnr = 0, worst_ssim = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int H = 12 + int(rng.next_below(6)), W = 12 + int(rng.next_below(6));
    Tensor<float> a = Tensor<float>::uniform({3, H, W}, rng, 0.0f, 1.0f);
    Tensor<float> b = Tensor<float>::uniform({3, H, W}, rng, 0.0f, 1.0f);
    // loop-oracle PSNR
    double mse = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
      const double d = double(a.data()[i]) - double(b.data()[i]);
      mse += d * d;
    }
    mse /= double(a.numel());
    worst_psnr = std::max(worst_psnr, std::abs(psnr(a, b) - 10.0 * std::log10(1.0 / mse)));

    // direct-windowed SSIM reference
    std::vector<double> w(11);
    double wsum = 0;
    for (int i = 0; i < 11; ++i) {
      w[size_t(i)] = std::exp(-(i - 5.0) * (i - 5.0) / (2 * 1.5 * 1.5));
      wsum += w[size_t(i)];
    }
    for (double& v : w) v /= wsum;
    constexpr double C1 = 1e-4, C2 = 9e-4;
    double total = 0;
    int count = 0;
    for (int c = 0; c < 3; ++c)
      for (int oy = 0; oy + 11 <= H; ++oy)
        for (int ox = 0; ox + 11 <= W; ++ox) {
          double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
          for (int dy = 0; dy < 11; ++dy)
            for (int dx = 0; dx < 11; ++dx) {
              const double ww = w[size_t(dy)] * w[size_t(dx)];
              const double xv = a.data()[(c * H + oy + dy) * W + ox + dx];
              const double yv = b.data()[(c * H + oy + dy) * W + ox + dx];
              mx += ww * xv;
              my += ww * yv;
              mxx += ww * xv * xv;
              myy += ww * yv * yv;
              mxy += ww * xv * yv;
            }
          total += ((2 * mx * my + C1) * (2 * (mxy - mx * my) + C2)) /
                   ((mx * mx + my * my + C1) * ((mxx - mx * mx) + (myy - my * my) + C2));
          ++count;
        }
    worst_ssim = std::max(worst_ssim, std::abs(ssim(a, b) - total / count));
  }

  // closed forms
  Tensor<double> u5 = Tensor<double>::full({3, 16, 16}, 0.5);
  Tensor<double> u6 = Tensor<double>::full({3, 16, 16}, 0.6);
  const double cap_ok = psnr(u5, u5) == 100.0;
  const double twenty = std::abs(psnr(u5, u6) - 20.0);
  Rng rng2(102);
  Tensor<float> img = Tensor<float>::uniform({3, 16, 16}, rng2, 0.0f, 1.0f);
  const bool ssim_one = ssim(img, img) == 1.0;

  std::ostringstream os;
  os << "PSNR vs loop oracle max " << worst_psnr << " dB (limit 1e-6), SSIM vs reference max "
     << worst_ssim << " (limit 1e-5), cap@100 " << (cap_ok ? "exact" : "WRONG")
     << ", |20dB case - 20| = " << twenty << ", ssim(x,x)==1 " << (ssim_one ? "exact" : "WRONG");
  detail = os.str();
  return worst_psnr < 1e-6 && worst_ssim < 1e-5 && cap_ok && twenty < 1e-9 && ssim_one;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) selected.push_back(std::atoi(item.c_str()));
    } else if (std::strcmp(argv[i], "--list") == 0) {
      std::printf("criteria: 1..8\n");
      return 0;
    } else {
      std::fprintf(stderr, "usage: %s [--criterion N[,M...]]\n", argv[0]);
      return 2;
    }
  }
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8};

  struct Entry {
    int id;
    const char* name;
    bool (*run)(std::string&);
  };
  const Entry entries[] = {
      {1, "gradient-check suite", criterion1},
      {2, "operator invariant suite", criterion2},
      {3, "determinism & round-trips", criterion3},
      {4, "desk-scale learning vs copy baseline", criterion4},
      {5, "novel-object generalization", criterion5},
      {6, "action conditioning", criterion6},
      {7, "state prediction", criterion7},
      {8, "metric oracles", criterion8},
  };

  int failures = 0;
  for (const Entry& e : entries) {
    bool wanted = false;
    for (int id : selected) wanted |= id == e.id;
    if (!wanted) continue;
    const double t0 = now_s();
    std::string detail;
    bool passed = false;
    try {
      passed = e.run(detail);
    } catch (const std::exception& ex) {
      detail = std::string("exception: ") + ex.what();
    }
    std::printf("[%s] criterion %d: %s (%.1fs) -- %s\n", passed ? "PASS" : "FAIL", e.id, e.name,
                now_s() - t0, detail.c_str());
    std::fflush(stdout);
    if (!passed) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
