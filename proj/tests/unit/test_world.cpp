#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "videopred/dataset.hpp"
#include "videopred/world.hpp"

using namespace vp;

namespace {

WorldConfig small_world() {
  WorldConfig wc;
  wc.image_h = wc.image_w = 32;
  wc.num_objects = 3;
  wc.object_catalog = seen_object_pool();
  wc.episode_length = 10;
  wc.seed = 77;
  return wc;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST(Episode, StateLawHoldsExactly) {
  WorldConfig wc = small_world();
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Episode ep = generate_episode(wc, seed);
    for (int t = 0; t + 1 < ep.T; ++t) {
      for (int d = 0; d < 2; ++d) {
        const float next = std::min(1.0f, std::max(-1.0f, ep.states[size_t(t) * 2 + d] +
                                                              ep.actions[size_t(t) * 2 + d]));
        ASSERT_EQ(ep.states[size_t(t + 1) * 2 + d], next)
            << "seed " << seed << " t " << t << " dim " << d;
      }
    }
  }
}

TEST(Episode, PixelsInUnitRangeAndFinite) {
  Episode ep = generate_episode(small_world(), 3);
  for (float v : ep.images) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
}

TEST(Episode, SameSeedBitIdentical) {
  WorldConfig wc = small_world();
  Episode a = generate_episode(wc, 42);
  Episode b = generate_episode(wc, 42);
  ASSERT_EQ(a.images.size(), b.images.size());
  for (size_t i = 0; i < a.images.size(); ++i) ASSERT_EQ(a.images[i], b.images[i]);
  for (size_t i = 0; i < a.states.size(); ++i) ASSERT_EQ(a.states[i], b.states[i]);
  for (size_t i = 0; i < a.actions.size(); ++i) ASSERT_EQ(a.actions[i], b.actions[i]);
  Episode c = generate_episode(wc, 43);
  bool any_diff = false;
  for (size_t i = 0; i < a.images.size() && !any_diff; ++i)
    any_diff = a.images[i] != c.images[i];
  EXPECT_TRUE(any_diff);
}

TEST(Episode, ZeroActionScriptIsStatic) {
  // run physics directly with zero actions: frames must be identical
  WorldConfig wc = small_world();
  wc.num_objects = 2;
  std::vector<ObjectSpec> specs = {wc.object_catalog[0], wc.object_catalog[1]};
  std::vector<Vec2> positions = {{-0.5, -0.5}, {0.5, 0.5}};
  Vec2 pusher{0.0, 0.0};
  std::vector<float> frame_a(size_t(wc.image_h) * wc.image_w * 3);
  std::vector<float> frame_b(frame_a.size());
  render(positions, specs, pusher, wc, frame_a.data());
  physics_step(positions, specs, pusher, {0.0, 0.0}, wc);
  render(positions, specs, pusher, wc, frame_b.data());
  for (size_t i = 0; i < frame_a.size(); ++i) ASSERT_EQ(frame_a[i], frame_b[i]);
}

TEST(PhysicsStep, NoContactLeavesObjectsStill) {
  WorldConfig wc = small_world();
  std::vector<ObjectSpec> specs = {wc.object_catalog[0]};
  std::vector<Vec2> positions = {{0.7, 0.7}};
  Vec2 pusher{-0.7, -0.7};
  physics_step(positions, specs, pusher, {0.05, 0.0}, wc);
  EXPECT_DOUBLE_EQ(positions[0].x, 0.7);
  EXPECT_DOUBLE_EQ(positions[0].y, 0.7);
}

TEST(PhysicsStep, PenetrationDepthTimesFrictionRule) {
  WorldConfig wc = small_world();
  ObjectSpec disc = wc.object_catalog[0];
  disc.friction = 1.0;
  std::vector<ObjectSpec> specs = {disc};
  const double r = 2.0 * disc.size, pr = 2.0 * wc.pusher_radius;
  // place the object exactly at contact distance, then push straight in by d
  const double d = 0.03;
  std::vector<Vec2> positions = {{r + pr - d, 0.0}};
  Vec2 pusher{-d, 0.0};
  physics_step(positions, specs, pusher, {d, 0.0}, wc);
  // pusher ends at origin; penetration depth is d, object displaced by d
  EXPECT_NEAR(positions[0].x, r + pr, 1e-12);
  EXPECT_NEAR(positions[0].y, 0.0, 1e-12);
}

TEST(PhysicsStep, HalfFrictionHalvesDisplacement) {
  WorldConfig wc = small_world();
  ObjectSpec disc = wc.object_catalog[0];
  disc.friction = 0.5;
  std::vector<ObjectSpec> specs = {disc};
  const double r = 2.0 * disc.size, pr = 2.0 * wc.pusher_radius;
  const double d = 0.03;
  std::vector<Vec2> positions = {{r + pr - d, 0.0}};
  Vec2 pusher{-d, 0.0};
  physics_step(positions, specs, pusher, {d, 0.0}, wc);
  EXPECT_NEAR(positions[0].x, r + pr - d + 0.5 * d, 1e-12);
}

TEST(PhysicsStep, ChainPushMatchesConvergedRelaxation) {
  WorldConfig wc = small_world();
  ObjectSpec disc = wc.object_catalog[0];
  disc.friction = 1.0;
  std::vector<ObjectSpec> specs = {disc, disc};
  const double r = 2.0 * disc.size, pr = 2.0 * wc.pusher_radius;
  auto run = [&](int iters) {
    std::vector<Vec2> pos = {{r + pr - 0.02, 0.0}, {r + pr - 0.02 + 2 * r - 0.015, 0.0}};
    Vec2 pusher{-0.02, 0.0};
    physics_step(pos, specs, pusher, {0.02, 0.0}, wc, iters);
    return pos;
  };
  auto fast = run(3);
  auto converged = run(50);
  for (size_t i = 0; i < fast.size(); ++i) {
    EXPECT_NEAR(fast[i].x, converged[i].x, 1e-3 * 2.0);  // within 1e-3 of bin width
    EXPECT_NEAR(fast[i].y, converged[i].y, 1e-3 * 2.0);
  }
}

TEST(GenerateEpisode, StraightPushDisplacesDiscAlongDirection) {
  // hand-stepped oracle: pusher driven through a disc's center moves it
  // forward by the accumulated penetration
  WorldConfig wc = small_world();
  ObjectSpec disc = wc.object_catalog[0];
  disc.friction = 1.0;
  std::vector<ObjectSpec> specs = {disc};
  std::vector<Vec2> positions = {{0.2, 0.0}};
  Vec2 pusher{-0.3, 0.0};
  const double step = 0.05;
  // hand-stepped scalar simulation of the same rule along the x axis
  double hand_obj = 0.2, hand_push = -0.3;
  const double min_d = 2.0 * disc.size + 2.0 * wc.pusher_radius;
  for (int t = 0; t < 10; ++t) {
    physics_step(positions, specs, pusher, {step, 0.0}, wc);
    hand_push += step;
    const double depth = min_d - (hand_obj - hand_push);
    if (depth > 0) hand_obj += depth;
    ASSERT_NEAR(positions[0].x, hand_obj, 1e-12) << "t=" << t;
    ASSERT_NEAR(positions[0].y, 0.0, 1e-12);
  }
  EXPECT_GT(positions[0].x, 0.2);  // displaced along the push direction
}

TEST(GenerateEpisode, ObjectsStayInsideBin) {
  WorldConfig wc = small_world();
  wc.num_objects = 4;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    Episode ep = generate_episode(wc, seed);
    // probe via state track: pusher position always within bounds
    for (int t = 0; t < ep.T; ++t) {
      ASSERT_LE(std::abs(ep.states[size_t(t) * 2 + 0]), 1.0f);
      ASSERT_LE(std::abs(ep.states[size_t(t) * 2 + 1]), 1.0f);
    }
  }
}

TEST(Render, EmptyWorldIsUniformBackground) {
  WorldConfig wc = small_world();
  std::vector<float> frame(size_t(wc.image_h) * wc.image_w * 3);
  render({}, {}, Vec2{2.0, 2.0}, wc, frame.data());  // pusher off-screen
  for (int p = 1; p < wc.image_h * wc.image_w; ++p) {
    ASSERT_EQ(frame[size_t(p) * 3 + 0], frame[0]);
    ASSERT_EQ(frame[size_t(p) * 3 + 1], frame[1]);
    ASSERT_EQ(frame[size_t(p) * 3 + 2], frame[2]);
  }
}

TEST(Render, CenteredDiscAreaMatchesAnalytic) {
  WorldConfig wc = small_world();
  wc.image_h = wc.image_w = 64;
  ObjectSpec disc{0, ObjectShape::kDisc, 0.15, {1.0, 0.0, 0.0}, 1.0};
  std::vector<float> frame(size_t(64) * 64 * 3);
  render({{0.0, 0.0}}, {disc}, Vec2{2.0, 2.0}, wc, frame.data());
  int count = 0;
  for (int p = 0; p < 64 * 64; ++p)
    if (frame[size_t(p) * 3] == 1.0f) ++count;
  const double r_pix = 2.0 * disc.size * 0.5 * 64;  // radius in pixels
  const double area = M_PI * r_pix * r_pix;
  const double perimeter = 2.0 * M_PI * r_pix;
  EXPECT_NEAR(count, area, perimeter);  // discretization bound
}

TEST(Render, CenterPixelCarriesSpecColor) {
  WorldConfig wc = small_world();
  std::vector<ObjectSpec> specs = {wc.object_catalog[0], wc.object_catalog[1]};
  std::vector<Vec2> positions = {{-0.5, -0.5}, {0.5, 0.5}};
  std::vector<float> frame(size_t(wc.image_h) * wc.image_w * 3);
  render(positions, specs, Vec2{2.0, 2.0}, wc, frame.data());
  for (size_t i = 0; i < specs.size(); ++i) {
    const int px = int((positions[i].x + 1.0) * 0.5 * wc.image_w);
    const int py = int((positions[i].y + 1.0) * 0.5 * wc.image_h);
    const float* p = frame.data() + (py * wc.image_w + px) * 3;
    EXPECT_FLOAT_EQ(p[0], float(specs[i].color[0]));
    EXPECT_FLOAT_EQ(p[1], float(specs[i].color[1]));
    EXPECT_FLOAT_EQ(p[2], float(specs[i].color[2]));
  }
}

TEST(Dataset, RoundTripIsBitExact) {
  WorldConfig wc = small_world();
  std::vector<Episode> eps;
  for (std::uint64_t s = 0; s < 3; ++s) eps.push_back(generate_episode(wc, s));
  const std::string path = temp_path("vp_roundtrip.vpds");
  write_dataset(eps, path);
  std::vector<Episode> back = read_dataset(path);
  ASSERT_EQ(back.size(), eps.size());
  for (size_t e = 0; e < eps.size(); ++e) {
    ASSERT_EQ(back[e].T, eps[e].T);
    ASSERT_EQ(back[e].H, eps[e].H);
    ASSERT_EQ(back[e].images.size(), eps[e].images.size());
    for (size_t i = 0; i < eps[e].images.size(); ++i)
      ASSERT_EQ(back[e].images[i], eps[e].images[i]);
    for (size_t i = 0; i < eps[e].states.size(); ++i)
      ASSERT_EQ(back[e].states[i], eps[e].states[i]);
    for (size_t i = 0; i < eps[e].actions.size(); ++i)
      ASSERT_EQ(back[e].actions[i], eps[e].actions[i]);
  }
  std::filesystem::remove(path);
}

TEST(Dataset, CorruptedMagicIsCheckedError) {
  const std::string path = temp_path("vp_badmagic.vpds");
  std::ofstream out(path, std::ios::binary);
  out << "JUNKratherthanadataset";
  out.close();
  EXPECT_THROW(read_dataset(path), IoError);
  std::filesystem::remove(path);
}

TEST(Dataset, TruncatedPayloadIsCheckedError) {
  WorldConfig wc = small_world();
  std::vector<Episode> eps = {generate_episode(wc, 1)};
  const std::string path = temp_path("vp_trunc.vpds");
  write_dataset(eps, path);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size / 2);
  EXPECT_THROW(read_dataset(path), IoError);
  std::filesystem::remove(path);
}

TEST(Dataset, EmptyListIsValidFile) {
  const std::string path = temp_path("vp_empty.vpds");
  write_dataset({}, path);
  EXPECT_TRUE(read_dataset(path).empty());
  std::filesystem::remove(path);
}

TEST(Splits, PoolsAreDisjoint) {
  for (const auto& seen : seen_object_pool())
    for (const auto& novel : novel_object_pool()) {
      EXPECT_NE(seen.id, novel.id);
      // colors differ too (novel appearance unseen in training)
      EXPECT_FALSE(seen.color[0] == novel.color[0] && seen.color[1] == novel.color[1] &&
                   seen.color[2] == novel.color[2]);
    }
}

TEST(Splits, ValidationIsFivePercent) {
  DatasetSplits s = make_splits(small_world(), 100, 10);
  EXPECT_EQ(s.validation.episodes, 5);
  EXPECT_EQ(s.train.episodes, 95);
}

TEST(Splits, NovelEpisodesUseNovelPoolOnly) {
  DatasetSplits s = make_splits(small_world(), 20, 4);
  EXPECT_EQ(s.test_novel.config.object_catalog.size(), novel_object_pool().size());
  for (const auto& spec : s.test_novel.config.object_catalog) EXPECT_GE(spec.id, 100);
  for (const auto& spec : s.train.config.object_catalog) EXPECT_LT(spec.id, 100);
}

TEST(Splits, StreamsAreDisjointBySeed) {
  DatasetSplits s = make_splits(small_world(), 40, 4);
  EXPECT_NE(s.train.seed_base, s.validation.seed_base);
  EXPECT_NE(s.train.seed_base, s.test_seen.seed_base);
  auto train = generate_split(s.train);
  auto val = generate_split(s.validation);
  // spot-check: first validation episode differs from every training episode
  bool all_differ = true;
  for (const Episode& ep : train) {
    bool same = true;
    for (size_t i = 0; i < 60 && same; ++i) same = ep.images[i] == val[0].images[i];
    if (same && ep.states == val[0].states) all_differ = false;
  }
  EXPECT_TRUE(all_differ);
}
