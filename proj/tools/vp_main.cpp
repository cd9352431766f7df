// Command-line driver: dataset generation, training, evaluation, action
// counterfactuals and mask inspection on the synthetic pushing world.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "videopred/videopred.hpp"

namespace {

using F = float;

std::uint64_t file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw vp::IoError("cannot open '" + path + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  char buf[65536];
  while (in) {
    in.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < in.gcount(); ++i)
      h = (h ^ (unsigned char)buf[i]) * 0x100000001b3ULL;
  }
  return h;
}

vp::RunConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return vp::RunConfig{};
  return vp::load_run_config(path);
}

struct LoadedModel {
  vp::Predictor<F> model;
  vp::LoadedCheckpoint<F> ckpt;
};

LoadedModel load_model(const std::string& checkpoint_path) {
  vp::LoadedCheckpoint<F> ckpt = vp::load_checkpoint<F>(checkpoint_path);
  vp::Predictor<F> model(ckpt.model_config, ckpt.seed);
  vp::restore_params(model, ckpt.tensors);
  return LoadedModel{std::move(model), std::move(ckpt)};
}

int cmd_generate_data(const std::string& config_path, const std::string& out,
                      const std::string& split, int episodes, std::uint64_t seed,
                      bool seed_given) {
  vp::RunConfig rc = load_config_or_default(config_path);
  if (seed_given) rc.world.seed = seed;
  vp::DatasetSplits splits = vp::make_splits(rc.world, 20, 20);
  vp::SplitSpec spec;
  if (split == "train")
    spec = splits.train;
  else if (split == "val")
    spec = splits.validation;
  else if (split == "test-seen")
    spec = splits.test_seen;
  else if (split == "test-novel")
    spec = splits.test_novel;
  else
    throw vp::Error("unknown split '" + split + "' (expected train|val|test-seen|test-novel)");
  spec.episodes = episodes;

  std::vector<vp::Episode> eps = vp::generate_split(spec);
  vp::write_dataset(eps, out);
  std::printf("wrote %zu episodes to %s\nchecksum %016" PRIx64 "\n", eps.size(), out.c_str(),
              file_checksum(out));
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& val_path, const std::string& out_dir, std::int64_t max_steps,
              const std::string& resume) {
  vp::RunConfig rc = load_config_or_default(config_path);
  if (max_steps > 0) rc.train.max_steps = max_steps;

  std::vector<vp::Episode> train_eps = vp::read_dataset(data_path);
  std::vector<vp::Episode> val_eps;
  if (!val_path.empty()) val_eps = vp::read_dataset(val_path);

  std::int64_t start_step = 0;
  vp::Predictor<F> model(rc.model, rc.train.seed);
  vp::AdamState<F> opt = vp::AdamState<F>::init(model.params());
  if (!resume.empty()) {
    vp::LoadedCheckpoint<F> ckpt = vp::load_checkpoint<F>(resume);
    vp::check(ckpt.model_config.variant == rc.model.variant,
              "resume: checkpoint variant differs from config");
    start_step = vp::restore_training(model, opt, ckpt);
    std::printf("resuming from %s at step %lld\n", resume.c_str(), (long long)start_step);
  }

  vp::TrainResult res =
      vp::train(model, opt, train_eps, val_eps, rc.train, out_dir, start_step, true);
  if (!res.best_checkpoint_path.empty())
    std::printf("best checkpoint: %s (val_loss %.6f at step %lld)\n",
                res.best_checkpoint_path.c_str(), res.best_val_loss,
                (long long)res.best_val_step);
  else if (!res.final_checkpoint_path.empty())
    std::printf("final checkpoint: %s\n", res.final_checkpoint_path.c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path, int horizon,
             const std::string& out_dir, const std::string& baseline, int strip_episodes) {
  LoadedModel lm = load_model(checkpoint_path);
  std::vector<vp::Episode> eps = vp::read_dataset(data_path);
  const std::string split_id =
      std::filesystem::path(data_path).stem().string();

  vp::MetricsReport report = vp::evaluate_model(lm.model, eps, horizon, 8,
                                                vp::variant_name(lm.model.config().variant),
                                                split_id);
  std::filesystem::create_directories(out_dir);
  std::vector<std::pair<int, std::vector<vp::Tensor<F>>>> strips;
  for (int e = 0; e < std::min<int>(strip_episodes, int(eps.size())); ++e)
    strips.emplace_back(e, vp::counterfactual_rollouts(lm.model, eps, e, {1.0}, horizon)[0]);
  vp::emit_artifacts(report, strips, out_dir);
  std::printf("model mean PSNR t1..%d: %.3f dB\n", horizon, report.mean_psnr(1, horizon));

  if (baseline == "copy") {
    vp::MetricsReport base = vp::evaluate_copy_baseline(
        eps, lm.model.config().context_frames, horizon, split_id);
    vp::write_metrics_csv(base, out_dir + "/" + vp::metrics_csv_name("copy", split_id));
    std::printf("copy baseline mean PSNR t1..%d: %.3f dB\n", horizon,
                base.mean_psnr(1, horizon));
  } else if (!baseline.empty()) {
    throw vp::Error("unknown baseline '" + baseline + "' (supported: copy)");
  }
  std::printf("artifacts written to %s\n", out_dir.c_str());
  return 0;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& data_path, int episode,
                std::vector<double> scales, int horizon, const std::string& out_dir) {
  LoadedModel lm = load_model(checkpoint_path);
  if (scales.empty()) scales = {1.0};
  for (double s : scales)
    if (s != 1.0 && !lm.model.config().action_conditioned)
      throw vp::Error("action scale " + std::to_string(s) +
                      " requires an action-conditioned checkpoint");
  std::vector<vp::Episode> eps = vp::read_dataset(data_path);
  const std::string split_id = std::filesystem::path(data_path).stem().string();
  const std::string model_id = vp::variant_name(lm.model.config().variant);

  auto rollouts = vp::counterfactual_rollouts(lm.model, eps, episode, scales, horizon);
  std::filesystem::create_directories(out_dir);
  std::vector<vp::Episode> one = {eps[size_t(episode)]};
  std::vector<double> energies = vp::counterfactual_energies(lm.model, one, scales, horizon);
  for (size_t i = 0; i < scales.size(); ++i) {
    vp::write_frame_strip(rollouts[i], out_dir + "/" + vp::strip_png_name(model_id, split_id,
                                                                          episode, scales[i]));
    std::printf("scale %.2f  motion energy %.6f\n", scales[i], energies[i]);
  }
  std::printf("artifacts written to %s\n", out_dir.c_str());
  return 0;
}

int cmd_inspect_masks(const std::string& checkpoint_path, const std::string& data_path,
                      int episode, int horizon, const std::string& out_dir) {
  LoadedModel lm = load_model(checkpoint_path);
  vp::check(lm.model.config().variant != vp::Variant::kRawPixel,
            "inspect-masks: the raw-pixel ablation has no compositing mask");
  std::vector<vp::Episode> eps = vp::read_dataset(data_path);
  vp::check(episode >= 0 && episode < int(eps.size()),
            "episode index " + std::to_string(episode) + " out of range (split has " +
                std::to_string(eps.size()) + " episodes)");
  const vp::Episode& ep = eps[size_t(episode)];
  const int T0 = lm.model.config().context_frames;
  vp::check(ep.T >= T0 + horizon, "horizon exceeds episode length");

  vp::Graph<F> g(false);
  std::vector<int> idx = {episode}, offsets = {0};
  const int len = T0 + horizon;
  auto frames = vp::pack_frames<F>(eps, idx, offsets, len);
  auto init_state = vp::pack_states_at<F>(eps, idx, offsets);
  auto actions = vp::pack_actions<F>(eps, idx, offsets, len);
  auto rollout = lm.model.rollout(g, frames, init_state, actions, horizon,
                                  vp::RolloutMode::autoregressive());

  std::filesystem::create_directories(out_dir);
  for (int t = 0; t < horizon; ++t) {
    const auto& step = rollout.predictions[size_t(t)];
    vp::write_mask_grayscale(step.mask.values, 0,
                             out_dir + "/mask_t" + std::to_string(t + 1) + ".png");
    vp::write_frame_strip(std::vector<vp::Tensor<F>>{step.image},
                          out_dir + "/frame_t" + std::to_string(t + 1) + ".png");
  }
  std::printf("wrote %d background masks and frames to %s\n", horizon, out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"action-conditioned video prediction on a synthetic pushing world"};
  app.require_subcommand(1);

  std::string config_path, out, split = "train", data_path, val_path, out_dir, resume;
  std::string checkpoint_path, baseline;
  int episodes = 16, horizon = 8, episode = 0, strip_episodes = 4;
  std::int64_t max_steps = -1;
  std::uint64_t seed = 0;
  std::vector<double> scales;

  CLI::App* gen = app.add_subcommand("generate-data", "generate a synthetic dataset split");
  gen->add_option("--config", config_path, "run configuration file");
  gen->add_option("--out", out, "output VPDS path")->required();
  gen->add_option("--split", split, "train|val|test-seen|test-novel");
  gen->add_option("--episodes", episodes, "episode count");
  CLI::Option* seed_opt = gen->add_option("--seed", seed, "world seed override");

  CLI::App* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--config", config_path, "run configuration file");
  tr->add_option("--data", data_path, "training VPDS dataset")->required();
  tr->add_option("--val-data", val_path, "validation VPDS dataset");
  tr->add_option("--out-dir", out_dir, "checkpoint/log directory")->required();
  tr->add_option("--max-steps", max_steps, "override configured max_steps");
  tr->add_option("--resume", resume, "checkpoint to resume from");

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  ev->add_option("--checkpoint", checkpoint_path, "VPCK checkpoint")->required();
  ev->add_option("--data", data_path, "VPDS dataset")->required();
  ev->add_option("--horizon", horizon, "evaluation horizon");
  ev->add_option("--out-dir", out_dir, "artifact directory")->required();
  ev->add_option("--baseline", baseline, "also evaluate a baseline (copy)");
  ev->add_option("--strip-episodes", strip_episodes, "episodes to render as strips");

  CLI::App* pr = app.add_subcommand("predict", "roll out under scaled actions");
  pr->add_option("--checkpoint", checkpoint_path, "VPCK checkpoint")->required();
  pr->add_option("--data", data_path, "VPDS dataset")->required();
  pr->add_option("--episode", episode, "episode index");
  pr->add_option("--action-scale", scales, "action multipliers");
  pr->add_option("--horizon", horizon, "rollout horizon");
  pr->add_option("--out-dir", out_dir, "artifact directory")->required();

  CLI::App* im = app.add_subcommand("inspect-masks", "emit background-mask visualizations");
  im->add_option("--checkpoint", checkpoint_path, "VPCK checkpoint")->required();
  im->add_option("--data", data_path, "VPDS dataset")->required();
  im->add_option("--episode", episode, "episode index");
  im->add_option("--horizon", horizon, "rollout horizon");
  im->add_option("--out-dir", out_dir, "artifact directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed())
      return cmd_generate_data(config_path, out, split, episodes, seed, seed_opt->count() > 0);
    if (tr->parsed())
      return cmd_train(config_path, data_path, val_path, out_dir, max_steps, resume);
    if (ev->parsed())
      return cmd_eval(checkpoint_path, data_path, horizon, out_dir, baseline, strip_episodes);
    if (pr->parsed()) return cmd_predict(checkpoint_path, data_path, episode, scales, horizon, out_dir);
    if (im->parsed())
      return cmd_inspect_masks(checkpoint_path, data_path, episode, horizon, out_dir);
  } catch (const vp::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
  return 0;
}
