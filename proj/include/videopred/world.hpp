#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "videopred/common.hpp"

// Deterministic 2-D pushing world. Episodes mirror the structure of robot
// interaction data: RGB frames, an internal state (the pusher position), and
// actions (the commanded displacement). All randomness comes from SplitMix64
// and the arithmetic avoids transcendentals, so identical (config, seed)
// pairs produce bit-identical episodes on any machine.
//
// Coordinates are normalized to [-1,1] on both axes; a length that is
// fraction f of the image width is 2*f in these units.

namespace vp {

enum class ObjectShape { kDisc, kSquare, kTriangle };

struct ObjectSpec {
  int id = 0;  // unique across seen+novel pools
  ObjectShape shape = ObjectShape::kDisc;
  double size = 0.08;  // half-extent as a fraction of image width
  std::array<double, 3> color = {0.8, 0.2, 0.2};
  double friction = 1.0;  // in (0,1]; scales how far a push carries
};

struct WorldConfig {
  int image_h = 64;
  int image_w = 64;
  int num_objects = 4;
  std::vector<ObjectSpec> object_catalog;
  double pusher_radius = 0.06;  // fraction of image width
  double max_action = 0.07;     // max commanded displacement, fraction of width
  int episode_length = 12;
  std::uint64_t seed = 0;

  void validate(int context_frames = 1) const {
    check(episode_length >= context_frames + 1, "world: episode_length too short");
    check(num_objects >= 0, "world: num_objects must be >= 0");
    check(!object_catalog.empty() || num_objects == 0, "world: empty object catalog");
    check(pusher_radius > 0 && pusher_radius < 0.5, "world: pusher_radius out of range");
    check(max_action > 0 && max_action < 0.5, "world: max_action out of range");
  }
};

/// One interaction sequence. images: [T,H,W,3] in [0,1] (row-major,
/// channel-last); states: [T,2] pusher position; actions: [T,2] commanded
/// displacement. Exact law: states[t+1] = clamp(states[t] + actions[t]).
struct Episode {
  int T = 0, H = 0, W = 0, S = 2, A = 2;
  std::vector<float> images;
  std::vector<float> states;
  std::vector<float> actions;

  const float* frame(int t) const { return images.data() + size_t(t) * size_t(H) * W * 3; }
  float* frame(int t) { return images.data() + size_t(t) * size_t(H) * W * 3; }
};

struct Vec2 {
  double x = 0, y = 0;
};

inline double clampd(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

namespace world_detail {

constexpr double kBinLimit = 1.0;             // state clamp bounds
constexpr double kScriptMargin = 0.92;        // scripts keep the pusher inside this box,
                                              // so the bin clamp never actually binds and
                                              // the state law stays exactly linear
constexpr std::array<double, 3> kBackground = {0.16, 0.16, 0.19};
constexpr std::array<double, 3> kPusherColor = {0.92, 0.92, 0.88};

/// Normalized half-extent of an object (world units).
inline double radius_of(const ObjectSpec& s) { return 2.0 * s.size; }

inline Vec2 clamp_to_bin(Vec2 p, double r) {
  return {clampd(p.x, -kBinLimit + r, kBinLimit - r), clampd(p.y, -kBinLimit + r, kBinLimit - r)};
}

}  // namespace world_detail

/// Quasi-static contact resolution for one step. The pusher moves by the
/// (magnitude-clamped) action; objects overlapping it are displaced along
/// the penetration normal by depth * friction; object-object overlaps are
/// relaxed symmetrically; everything stays inside the bin.
inline void physics_step(std::vector<Vec2>& positions, const std::vector<ObjectSpec>& specs,
                         Vec2& pusher, Vec2 action, const WorldConfig& cfg,
                         int relax_iterations = 3) {
  using namespace world_detail;
  const double max_a = 2.0 * cfg.max_action;
  const double alen = std::sqrt(action.x * action.x + action.y * action.y);
  if (alen > max_a) {
    action.x *= max_a / alen;
    action.y *= max_a / alen;
  }
  const double pr = 2.0 * cfg.pusher_radius;
  pusher.x = clampd(pusher.x + action.x, -kBinLimit, kBinLimit);
  pusher.y = clampd(pusher.y + action.y, -kBinLimit, kBinLimit);

  for (size_t i = 0; i < positions.size(); ++i) {
    const double r = radius_of(specs[i]);
    const double dx = positions[i].x - pusher.x, dy = positions[i].y - pusher.y;
    const double d2 = dx * dx + dy * dy, min_d = r + pr;
    if (d2 < min_d * min_d) {
      double d = std::sqrt(d2);
      double nx = 1.0, ny = 0.0;
      if (d > 1e-12) {
        nx = dx / d;
        ny = dy / d;
      }
      const double depth = min_d - d;
      positions[i].x += nx * depth * specs[i].friction;
      positions[i].y += ny * depth * specs[i].friction;
    }
  }
  for (int it = 0; it < relax_iterations; ++it) {
    for (size_t i = 0; i < positions.size(); ++i) {
      for (size_t j = i + 1; j < positions.size(); ++j) {
        const double ri = radius_of(specs[i]), rj = radius_of(specs[j]);
        const double dx = positions[j].x - positions[i].x, dy = positions[j].y - positions[i].y;
        const double d2 = dx * dx + dy * dy, min_d = ri + rj;
        if (d2 < min_d * min_d) {
          double d = std::sqrt(d2);
          double nx = 1.0, ny = 0.0;
          if (d > 1e-12) {
            nx = dx / d;
            ny = dy / d;
          }
          const double half = 0.5 * (min_d - d);
          positions[i].x -= nx * half;
          positions[i].y -= ny * half;
          positions[j].x += nx * half;
          positions[j].y += ny * half;
        }
      }
    }
    for (size_t i = 0; i < positions.size(); ++i)
      positions[i] = clamp_to_bin(positions[i], radius_of(specs[i]));
  }
}

/// Painter's-algorithm raster: background, then objects in catalog order,
/// pusher disc on top. Integer coverage test at pixel centers, no
/// anti-aliasing.
inline void render(const std::vector<Vec2>& positions, const std::vector<ObjectSpec>& specs,
                   const Vec2& pusher, const WorldConfig& cfg, float* out_hw3) {
  using namespace world_detail;
  const int H = cfg.image_h, W = cfg.image_w;
  for (int p = 0; p < H * W; ++p) {
    out_hw3[p * 3 + 0] = float(kBackground[0]);
    out_hw3[p * 3 + 1] = float(kBackground[1]);
    out_hw3[p * 3 + 2] = float(kBackground[2]);
  }
  auto paint = [&](double cx, double cy, double r, ObjectShape shape,
                   const std::array<double, 3>& color) {
    // pixel-space bounding box
    const double px = (cx + 1.0) * 0.5 * W - 0.5, py = (cy + 1.0) * 0.5 * H - 0.5;
    const double pr_x = r * 0.5 * W, pr_y = r * 0.5 * H;
    const int x0 = std::max(0, int(std::floor(px - pr_x - 1)));
    const int x1 = std::min(W - 1, int(std::ceil(px + pr_x + 1)));
    const int y0 = std::max(0, int(std::floor(py - pr_y - 1)));
    const int y1 = std::min(H - 1, int(std::ceil(py + pr_y + 1)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double wx = (x + 0.5) / W * 2.0 - 1.0, wy = (y + 0.5) / H * 2.0 - 1.0;
        const double dx = wx - cx, dy = wy - cy;
        bool inside = false;
        switch (shape) {
          case ObjectShape::kDisc:
            inside = dx * dx + dy * dy <= r * r;
            break;
          case ObjectShape::kSquare: {
            const double a = r * 0.82;
            inside = std::abs(dx) <= a && std::abs(dy) <= a;
            break;
          }
          case ObjectShape::kTriangle: {
            // upward-pointing triangle inscribed in the radius
            const double top = -r, bot = r * 0.6;
            if (dy >= top && dy <= bot) {
              const double half_w = r * 0.95 * (dy - top) / (bot - top);
              inside = std::abs(dx) <= half_w;
            }
            break;
          }
        }
        if (inside) {
          float* px3 = out_hw3 + (y * W + x) * 3;
          px3[0] = float(color[0]);
          px3[1] = float(color[1]);
          px3[2] = float(color[2]);
        }
      }
    }
  };
  for (size_t i = 0; i < positions.size(); ++i)
    paint(positions[i].x, positions[i].y, world_detail::radius_of(specs[i]), specs[i].shape,
          specs[i].color);
  paint(pusher.x, pusher.y, 2.0 * cfg.pusher_radius, ObjectShape::kDisc,
        world_detail::kPusherColor);
}

namespace world_detail {

/// Random unit-ish direction without trig: rejection-sample the unit disc.
inline Vec2 random_direction(Rng& rng) {
  for (int i = 0; i < 64; ++i) {
    const double x = rng.uniform(-1.0, 1.0), y = rng.uniform(-1.0, 1.0);
    const double d2 = x * x + y * y;
    if (d2 > 1e-4 && d2 <= 1.0) {
      const double inv = 1.0 / std::sqrt(d2);
      return {x * inv, y * inv};
    }
  }
  return {1.0, 0.0};
}

/// Scripted pusher motions: a meandering random push, or a sweep from the
/// border toward the middle. Both keep the pusher inside kScriptMargin.
inline std::vector<Vec2> pusher_script(Rng& rng, Vec2& start, int steps, double max_step) {
  std::vector<Vec2> actions;
  actions.reserve(size_t(steps));
  const bool sweep = rng.bernoulli(0.5);
  Vec2 pos;
  Vec2 dir;
  if (sweep) {
    // start on the outside border
    const int side = int(rng.next_below(4));
    const double u = rng.uniform(-kScriptMargin, kScriptMargin);
    pos = side == 0   ? Vec2{u, -kScriptMargin}
          : side == 1 ? Vec2{u, kScriptMargin}
          : side == 2 ? Vec2{-kScriptMargin, u}
                      : Vec2{kScriptMargin, u};
    dir = {-pos.x, -pos.y};
    const double n = std::sqrt(dir.x * dir.x + dir.y * dir.y);
    if (n > 1e-9) {
      dir.x /= n;
      dir.y /= n;
    }
  } else {
    pos = {rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6)};
    dir = random_direction(rng);
  }
  start = pos;
  for (int t = 0; t < steps; ++t) {
    // meander: blend the heading with fresh noise, renormalize
    const Vec2 n = random_direction(rng);
    const double mix = sweep ? 0.25 : 0.45;
    dir.x = (1.0 - mix) * dir.x + mix * n.x;
    dir.y = (1.0 - mix) * dir.y + mix * n.y;
    const double dn = std::sqrt(dir.x * dir.x + dir.y * dir.y);
    if (dn > 1e-9) {
      dir.x /= dn;
      dir.y /= dn;
    }
    // magnitude spans nearly the whole commandable range so the action ->
    // displacement map is learnable across it (including near-zero pushes);
    // strictly below max_step so float32 rounding of the recorded action can
    // never trip the magnitude clamp inside physics_step
    const double mag = max_step * rng.uniform(0.05, 0.98);
    Vec2 a{dir.x * mag, dir.y * mag};
    // command clipped so the pusher never reaches the bin clamp
    Vec2 next{pos.x + a.x, pos.y + a.y};
    Vec2 clipped{clampd(next.x, -kScriptMargin, kScriptMargin),
                 clampd(next.y, -kScriptMargin, kScriptMargin)};
    if (clipped.x != next.x) dir.x = -dir.x;
    if (clipped.y != next.y) dir.y = -dir.y;
    a = {clipped.x - pos.x, clipped.y - pos.y};
    pos = clipped;
    actions.push_back(a);
  }
  return actions;
}

}  // namespace world_detail

/// Builds a full episode: collision-free object placement, one scripted
/// pusher motion, stepped physics, rendered frames. Fully determined by
/// (config, seed).
inline Episode generate_episode(const WorldConfig& cfg, std::uint64_t seed) {
  using namespace world_detail;
  cfg.validate();
  Rng rng(seed);
  const int T = cfg.episode_length;

  // pick objects from the catalog (distinct specs while possible)
  std::vector<ObjectSpec> specs;
  std::vector<size_t> pool_order(cfg.object_catalog.size());
  for (size_t i = 0; i < pool_order.size(); ++i) pool_order[i] = i;
  for (int i = 0; i < cfg.num_objects; ++i) {
    if (!pool_order.empty()) {
      const size_t pick = size_t(rng.next_below(pool_order.size()));
      specs.push_back(cfg.object_catalog[pool_order[pick]]);
      pool_order.erase(pool_order.begin() + std::ptrdiff_t(pick));
    } else {
      specs.push_back(cfg.object_catalog[size_t(rng.next_below(cfg.object_catalog.size()))]);
    }
  }

  // scripted pusher motion (also fixes the start pose)
  Vec2 pusher;
  std::vector<Vec2> actions = pusher_script(rng, pusher, T, 2.0 * cfg.max_action);
  pusher = {double(float(pusher.x)), double(float(pusher.y))};

  // collision-free placement away from the pusher start
  std::vector<Vec2> positions;
  for (size_t i = 0; i < specs.size(); ++i) {
    const double r = radius_of(specs[i]);
    bool placed = false;
    for (int attempt = 0; attempt < 300 && !placed; ++attempt) {
      Vec2 p{rng.uniform(-1.0 + r, 1.0 - r), rng.uniform(-1.0 + r, 1.0 - r)};
      bool ok = true;
      const double pdx = p.x - pusher.x, pdy = p.y - pusher.y;
      const double pmin = r + 2.0 * cfg.pusher_radius;
      if (pdx * pdx + pdy * pdy < pmin * pmin) ok = false;
      for (size_t j = 0; ok && j < positions.size(); ++j) {
        const double dx = p.x - positions[j].x, dy = p.y - positions[j].y;
        const double md = r + radius_of(specs[j]);
        if (dx * dx + dy * dy < md * md) ok = false;
      }
      if (ok) {
        positions.push_back(p);
        placed = true;
      }
    }
    if (!placed) fail("generate_episode: could not place objects without overlap");
  }

  Episode ep;
  ep.T = T;
  ep.H = cfg.image_h;
  ep.W = cfg.image_w;
  ep.images.resize(size_t(T) * cfg.image_h * cfg.image_w * 3);
  ep.states.resize(size_t(T) * 2);
  ep.actions.resize(size_t(T) * 2);

  for (int t = 0; t < T; ++t) {
    render(positions, specs, pusher, cfg, ep.frame(t));
    ep.states[size_t(t) * 2 + 0] = float(pusher.x);
    ep.states[size_t(t) * 2 + 1] = float(pusher.y);
    ep.actions[size_t(t) * 2 + 0] = float(actions[size_t(t)].x);
    ep.actions[size_t(t) * 2 + 1] = float(actions[size_t(t)].y);
    if (t + 1 < T) {
      // keep the recorded float32 law exact: step from the stored state
      Vec2 cur{double(ep.states[size_t(t) * 2]), double(ep.states[size_t(t) * 2 + 1])};
      Vec2 act{double(ep.actions[size_t(t) * 2]), double(ep.actions[size_t(t) * 2 + 1])};
      pusher = cur;
      physics_step(positions, specs, pusher, act, cfg);
      pusher = {double(float(pusher.x)), double(float(pusher.y))};
    }
  }
  return ep;
}

// ---------------------------------------------------------------------------
// Object pools and splits
// ---------------------------------------------------------------------------

/// Objects available during training (and the seen test set).
inline std::vector<ObjectSpec> seen_object_pool() {
  return {
      {0, ObjectShape::kDisc, 0.075, {0.85, 0.20, 0.15}, 1.0},
      {1, ObjectShape::kSquare, 0.070, {0.20, 0.70, 0.25}, 0.9},
      {2, ObjectShape::kTriangle, 0.085, {0.25, 0.40, 0.85}, 1.0},
      {3, ObjectShape::kDisc, 0.060, {0.90, 0.80, 0.20}, 0.8},
      {4, ObjectShape::kSquare, 0.080, {0.80, 0.30, 0.75}, 1.0},
      {5, ObjectShape::kTriangle, 0.065, {0.25, 0.75, 0.75}, 0.9},
      {6, ObjectShape::kDisc, 0.085, {0.95, 0.55, 0.15}, 1.0},
      {7, ObjectShape::kSquare, 0.060, {0.55, 0.85, 0.35}, 0.85},
  };
}

/// Objects reserved for the novel test set: colors, sizes and friction not
/// used by any seen spec.
inline std::vector<ObjectSpec> novel_object_pool() {
  return {
      {100, ObjectShape::kSquare, 0.078, {0.95, 0.95, 0.95}, 1.0},
      {101, ObjectShape::kDisc, 0.068, {0.55, 0.15, 0.90}, 0.95},
      {102, ObjectShape::kTriangle, 0.090, {0.15, 0.90, 0.55}, 0.75},
      {103, ObjectShape::kDisc, 0.055, {0.90, 0.45, 0.45}, 1.0},
      {104, ObjectShape::kTriangle, 0.072, {0.45, 0.55, 0.95}, 0.9},
      {105, ObjectShape::kSquare, 0.088, {0.95, 0.75, 0.55}, 0.8},
  };
}

struct SplitSpec {
  std::string name;
  WorldConfig config;  // with the split's object pool as the catalog
  std::uint64_t seed_base = 0;
  int episodes = 0;
};

struct DatasetSplits {
  SplitSpec train, validation, test_seen, test_novel;
};

/// Seed-partitioned splits: train/validation/test_seen use the seen pool,
/// test_novel the novel pool. Validation takes 5% (1 in 20) of the training
/// episodes by seed index.
inline DatasetSplits make_splits(const WorldConfig& base, int train_episodes, int test_episodes) {
  check(train_episodes >= 0 && test_episodes >= 0, "make_splits: negative episode count");
  for (const auto& seen : seen_object_pool())
    for (const auto& novel : novel_object_pool())
      check(seen.id != novel.id, "make_splits: seen/novel pools overlap");

  WorldConfig seen_cfg = base;
  seen_cfg.object_catalog = seen_object_pool();
  WorldConfig novel_cfg = base;
  novel_cfg.object_catalog = novel_object_pool();

  const int val_count = train_episodes / 20;
  DatasetSplits s;
  s.train = {"train", seen_cfg, derive_seed(base.seed, seed_tag::kWorldTrain),
             train_episodes - val_count};
  s.validation = {"val", seen_cfg, derive_seed(base.seed, seed_tag::kWorldVal), val_count};
  s.test_seen = {"test-seen", seen_cfg, derive_seed(base.seed, seed_tag::kWorldTestSeen),
                 test_episodes};
  s.test_novel = {"test-novel", novel_cfg, derive_seed(base.seed, seed_tag::kWorldTestNovel),
                  test_episodes};
  return s;
}

inline std::vector<Episode> generate_split(const SplitSpec& split) {
  std::vector<Episode> eps;
  eps.reserve(size_t(split.episodes));
  for (int i = 0; i < split.episodes; ++i)
    eps.push_back(generate_episode(split.config, derive_seed(split.seed_base, std::uint64_t(i))));
  return eps;
}

}  // namespace vp
