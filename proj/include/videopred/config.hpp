#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "videopred/model.hpp"
#include "videopred/world.hpp"

// Plain-text run configuration: nested [section] headers with `key = value`
// entries, '#' comments. Every key is optional (documented defaults);
// unknown sections or keys are errors. parse -> serialize -> parse is the
// identity on values.

namespace vp {

/// Ground-truth feeding probability schedule for scheduled sampling.
/// `none` means fully autoregressive after the context frames.
struct SamplingSchedule {
  enum class Kind { kNone, kLinear };
  Kind kind = Kind::kNone;
  double from = 1.0;
  double to = 0.0;
  std::int64_t over = 1;

  static SamplingSchedule none() { return {}; }
  static SamplingSchedule linear(double from, double to, std::int64_t over) {
    return {Kind::kLinear, from, to, over};
  }
};

/// p(ground truth) at a training step under the schedule.
inline double sampling_probability(std::int64_t step, const SamplingSchedule& s) {
  check(step >= 0, "sampling_probability: negative step");
  if (s.kind == SamplingSchedule::Kind::kNone) return 0.0;
  check(s.over >= 1, "sampling_probability: schedule length must be >= 1");
  const double p = s.from - (s.from - s.to) * double(step) / double(s.over);
  return std::max(s.to, p);
}

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 8;
  int train_horizon = 8;
  int context_frames = 2;
  std::int64_t max_steps = 1000;
  SamplingSchedule scheduled_sampling = SamplingSchedule::none();
  double state_loss_weight = 1e-2;
  std::uint64_t seed = 0;
  int val_interval = 100;
  int checkpoint_interval = 1000;
  int val_max_episodes = 32;

  void validate() const {
    check(train_horizon >= 1, "train: train_horizon must be >= 1");
    check(batch_size >= 1, "train: batch_size must be >= 1");
    check(learning_rate >= 0, "train: negative learning rate");
    check(scheduled_sampling.from >= 0 && scheduled_sampling.from <= 1 &&
              scheduled_sampling.to >= 0 && scheduled_sampling.to <= 1,
          "train: sampling probabilities must lie in [0,1]");
    check(val_interval >= 1 && checkpoint_interval >= 1, "train: intervals must be >= 1");
  }
};

struct EvalOptions {
  int horizon = 8;
  int max_episodes = 0;  // 0 = all episodes in the split
};

struct RunConfig {
  WorldConfig world;
  ModelConfig model;
  TrainConfig train;
  EvalOptions eval;
};

// ---------------------------------------------------------------------------
// formatting / parsing helpers
// ---------------------------------------------------------------------------

namespace cfg_detail {

inline std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string fmt_bool(bool v) { return v ? "true" : "false"; }

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw Error("config: key '" + key + "': cannot parse number '" + v + "'");
  }
}

inline std::int64_t parse_int(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw Error("config: key '" + key + "': cannot parse integer '" + v + "'");
  }
}

inline std::uint64_t parse_u64(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    unsigned long long i = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw Error("config: key '" + key + "': cannot parse integer '" + v + "'");
  }
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw Error("config: key '" + key + "': expected true or false, got '" + v + "'");
}

inline std::vector<int> parse_int_list(const std::string& v, const std::string& key) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(int(parse_int(trim(item), key)));
  return out;
}

inline std::string fmt_int_list(const std::vector<int>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

inline SamplingSchedule parse_schedule(const std::string& v, const std::string& key) {
  if (v == "none") return SamplingSchedule::none();
  if (v.rfind("linear(", 0) == 0 && v.back() == ')') {
    const std::string args = v.substr(7, v.size() - 8);
    std::vector<std::string> parts;
    std::stringstream ss(args);
    std::string item;
    while (std::getline(ss, item, ',')) parts.push_back(trim(item));
    if (parts.size() == 3)
      return SamplingSchedule::linear(parse_double(parts[0], key), parse_double(parts[1], key),
                                      parse_int(parts[2], key));
  }
  throw Error("config: key '" + key + "': expected none or linear(from,to,steps), got '" + v +
              "'");
}

inline std::string fmt_schedule(const SamplingSchedule& s) {
  if (s.kind == SamplingSchedule::Kind::kNone) return "none";
  return "linear(" + fmt_double(s.from) + "," + fmt_double(s.to) + "," + std::to_string(s.over) +
         ")";
}

}  // namespace cfg_detail

/// Key/value lines grouped by section, preserving nothing but values.
using KvSections = std::map<std::string, std::map<std::string, std::string>>;

inline KvSections parse_kv_text(const std::string& text) {
  using cfg_detail::trim;
  KvSections doc;
  std::string section;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw Error("config: line " + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      doc[section];
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw Error("config: line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw Error("config: line " + std::to_string(lineno) + ": empty key");
    doc[section][key] = value;
  }
  return doc;
}

inline RunConfig parse_run_config(const std::string& text) {
  using namespace cfg_detail;
  KvSections doc = parse_kv_text(text);
  RunConfig rc;
  for (auto& [section, kv] : doc) {
    for (auto& [key, val] : kv) {
      const std::string where = section.empty() ? key : section + "." + key;
      if (section == "world") {
        if (key == "image_size") {
          rc.world.image_h = rc.world.image_w = int(parse_int(val, where));
        } else if (key == "num_objects") {
          rc.world.num_objects = int(parse_int(val, where));
        } else if (key == "pusher_radius") {
          rc.world.pusher_radius = parse_double(val, where);
        } else if (key == "max_action") {
          rc.world.max_action = parse_double(val, where);
        } else if (key == "episode_length") {
          rc.world.episode_length = int(parse_int(val, where));
        } else if (key == "seed") {
          rc.world.seed = parse_u64(val, where);
        } else {
          throw Error("config: unknown key '" + where + "'");
        }
      } else if (section == "model") {
        if (key == "variant") {
          rc.model.variant = variant_from_name(val);
        } else if (key == "num_transforms") {
          rc.model.num_transforms = int(parse_int(val, where));
        } else if (key == "kernel_size") {
          rc.model.kernel_size = int(parse_int(val, where));
        } else if (key == "image_size") {
          rc.model.image_h = rc.model.image_w = int(parse_int(val, where));
        } else if (key == "channel_widths") {
          rc.model.channel_widths = parse_int_list(val, where);
        } else if (key == "context_frames") {
          rc.model.context_frames = int(parse_int(val, where));
        } else if (key == "state_dim") {
          rc.model.state_dim = int(parse_int(val, where));
        } else if (key == "action_dim") {
          rc.model.action_dim = int(parse_int(val, where));
        } else if (key == "action_conditioned") {
          rc.model.action_conditioned = parse_bool(val, where);
        } else if (key == "use_generated_channel") {
          rc.model.use_generated_channel = parse_bool(val, where);
        } else if (key == "stp_hidden_units") {
          rc.model.stp_hidden_units = int(parse_int(val, where));
        } else if (key == "include_context_loss") {
          rc.model.include_context_loss = parse_bool(val, where);
        } else {
          throw Error("config: unknown key '" + where + "'");
        }
      } else if (section == "training") {
        if (key == "learning_rate") {
          rc.train.learning_rate = parse_double(val, where);
        } else if (key == "beta1") {
          rc.train.beta1 = parse_double(val, where);
        } else if (key == "beta2") {
          rc.train.beta2 = parse_double(val, where);
        } else if (key == "epsilon") {
          rc.train.epsilon = parse_double(val, where);
        } else if (key == "batch_size") {
          rc.train.batch_size = int(parse_int(val, where));
        } else if (key == "train_horizon") {
          rc.train.train_horizon = int(parse_int(val, where));
        } else if (key == "context_frames") {
          rc.train.context_frames = int(parse_int(val, where));
        } else if (key == "max_steps") {
          rc.train.max_steps = parse_int(val, where);
        } else if (key == "scheduled_sampling") {
          rc.train.scheduled_sampling = parse_schedule(val, where);
        } else if (key == "state_loss_weight") {
          rc.train.state_loss_weight = parse_double(val, where);
        } else if (key == "seed") {
          rc.train.seed = parse_u64(val, where);
        } else if (key == "val_interval") {
          rc.train.val_interval = int(parse_int(val, where));
        } else if (key == "checkpoint_interval") {
          rc.train.checkpoint_interval = int(parse_int(val, where));
        } else if (key == "val_max_episodes") {
          rc.train.val_max_episodes = int(parse_int(val, where));
        } else {
          throw Error("config: unknown key '" + where + "'");
        }
      } else if (section == "eval") {
        if (key == "horizon") {
          rc.eval.horizon = int(parse_int(val, where));
        } else if (key == "max_episodes") {
          rc.eval.max_episodes = int(parse_int(val, where));
        } else {
          throw Error("config: unknown key '" + where + "'");
        }
      } else {
        throw Error("config: unknown section '" + section + "'");
      }
    }
  }
  return rc;
}

inline std::string serialize_run_config(const RunConfig& rc) {
  using namespace cfg_detail;
  std::ostringstream os;
  os << "[world]\n";
  os << "image_size = " << rc.world.image_w << "\n";
  os << "num_objects = " << rc.world.num_objects << "\n";
  os << "pusher_radius = " << fmt_double(rc.world.pusher_radius) << "\n";
  os << "max_action = " << fmt_double(rc.world.max_action) << "\n";
  os << "episode_length = " << rc.world.episode_length << "\n";
  os << "seed = " << rc.world.seed << "\n";
  os << "\n[model]\n";
  os << "variant = " << variant_name(rc.model.variant) << "\n";
  os << "num_transforms = " << rc.model.num_transforms << "\n";
  os << "kernel_size = " << rc.model.kernel_size << "\n";
  os << "image_size = " << rc.model.image_w << "\n";
  os << "channel_widths = " << fmt_int_list(rc.model.channel_widths) << "\n";
  os << "context_frames = " << rc.model.context_frames << "\n";
  os << "state_dim = " << rc.model.state_dim << "\n";
  os << "action_dim = " << rc.model.action_dim << "\n";
  os << "action_conditioned = " << fmt_bool(rc.model.action_conditioned) << "\n";
  os << "use_generated_channel = " << fmt_bool(rc.model.use_generated_channel) << "\n";
  os << "stp_hidden_units = " << rc.model.stp_hidden_units << "\n";
  os << "include_context_loss = " << fmt_bool(rc.model.include_context_loss) << "\n";
  os << "\n[training]\n";
  os << "learning_rate = " << fmt_double(rc.train.learning_rate) << "\n";
  os << "beta1 = " << fmt_double(rc.train.beta1) << "\n";
  os << "beta2 = " << fmt_double(rc.train.beta2) << "\n";
  os << "epsilon = " << fmt_double(rc.train.epsilon) << "\n";
  os << "batch_size = " << rc.train.batch_size << "\n";
  os << "train_horizon = " << rc.train.train_horizon << "\n";
  os << "context_frames = " << rc.train.context_frames << "\n";
  os << "max_steps = " << rc.train.max_steps << "\n";
  os << "scheduled_sampling = " << fmt_schedule(rc.train.scheduled_sampling) << "\n";
  os << "state_loss_weight = " << fmt_double(rc.train.state_loss_weight) << "\n";
  os << "seed = " << rc.train.seed << "\n";
  os << "val_interval = " << rc.train.val_interval << "\n";
  os << "checkpoint_interval = " << rc.train.checkpoint_interval << "\n";
  os << "val_max_episodes = " << rc.train.val_max_episodes << "\n";
  os << "\n[eval]\n";
  os << "horizon = " << rc.eval.horizon << "\n";
  os << "max_episodes = " << rc.eval.max_episodes << "\n";
  return os.str();
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

/// Model-only key/value blob used inside checkpoints.
inline std::string serialize_model_blob(const ModelConfig& m, std::int64_t step,
                                        std::uint64_t seed) {
  RunConfig rc;
  rc.model = m;
  std::string model_section;
  const std::string full = serialize_run_config(rc);
  const size_t a = full.find("[model]");
  const size_t b = full.find("\n[training]");
  model_section = full.substr(a, b - a);
  std::ostringstream os;
  os << model_section << "\n[train_state]\nstep = " << step << "\nrng_seed = " << seed << "\n";
  return os.str();
}

struct ModelBlob {
  ModelConfig model;
  std::int64_t step = 0;
  std::uint64_t seed = 0;
};

inline ModelBlob parse_model_blob(const std::string& text) {
  using namespace cfg_detail;
  KvSections doc = parse_kv_text(text);
  ModelBlob out;
  std::string model_text = "[model]\n";
  for (auto& [key, val] : doc["model"]) model_text += key + " = " + val + "\n";
  out.model = parse_run_config(model_text).model;
  for (auto& [key, val] : doc["train_state"]) {
    if (key == "step")
      out.step = parse_int(val, "train_state.step");
    else if (key == "rng_seed")
      out.seed = parse_u64(val, "train_state.rng_seed");
    else
      throw Error("checkpoint: unknown train_state key '" + key + "'");
  }
  return out;
}

}  // namespace vp
