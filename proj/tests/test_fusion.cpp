#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "mtface/fusion.hpp"
#include "mtface/model.hpp"
#include "test_util.hpp"

using namespace mtface;

TEST_CASE("backbone channel plan and output size") {
  BackboneConfig cfg;
  CHECK(cfg.channels() == std::vector<int>{32, 64, 128, 256});
  ParamSet params;
  Backbone bb(params, cfg);
  Rng rng(1);
  bb.init(rng);
  Tensor face({3, 64, 64}, 0.3f);
  CHECK(extract_context(face, bb).size() == 256);
  CHECK(params.count("backbone.") == 9 * (3 * 32 + 32 * 64 + 64 * 128 + 128 * 256));
  CHECK(Backbone::parameter_count(cfg) == params.count("backbone."));
}

TEST_CASE("zero backbone maps any image to zero") {
  ParamSet params;
  Backbone bb(params, {64, 3});
  Rng rng(2);
  const auto ctx = extract_context(testutil::random_tensor(rng, {3, 32, 32}), bb);
  REQUIRE(ctx.size() == 64);
  for (float v : ctx) CHECK(v == 0.0f);
}

TEST_CASE("backbone is deterministic") {
  ParamSet a, b;
  Backbone x(a, {}), y(b, {});
  Rng r1(5), r2(5);
  x.init(r1);
  y.init(r2);
  Rng img(6);
  const Tensor face = testutil::random_tensor(img, {3, 32, 32});
  CHECK(extract_context(face, x) == extract_context(face, y));
}

TEST_CASE("backbone rejects malformed faces") {
  ParamSet params;
  Backbone bb(params, {});
  CHECK(testutil::error_kind_of([&] { extract_context(Tensor({1, 8, 8}), bb); }) == ErrorKind::Configuration);
}

TEST_CASE("unified dimension") {
  LandmarkConfig l;
  BackboneConfig b;
  CHECK(unified_dim(l, b) == 392);
  l.num_landmarks = 98;
  CHECK(unified_dim(l, b) == 452);
}

TEST_CASE("fuse layout and normalization") {
  LandmarkConfig l;
  l.num_landmarks = 2;
  BackboneConfig b{4, 2};
  LandmarkSet lm;
  lm.coords = {{256 * 0.25, 256 * 0.75}, {0.0, 128.0}};
  const ContextFeatures ctx{1.f, 2.f, 3.f, 4.f};
  const auto u = fuse(lm, ctx, l, b);
  CHECK(u == std::vector<float>{0.25f, 0.75f, 0.f, 0.5f, 1.f, 2.f, 3.f, 4.f});
  CHECK(testutil::error_kind_of([&] { fuse(lm, {1.f}, l, b); }) == ErrorKind::InvalidInput);
  LandmarkSet short_set;
  short_set.coords = {{1, 1}};
  CHECK(testutil::error_kind_of([&] { fuse(short_set, ctx, l, b); }) == ErrorKind::InvalidInput);
}

TEST_CASE("model landmark block equals the fused landmark slots") {
  ModelConfig cfg;
  cfg.landmark = {68, 1, 32, 8, 2};
  cfg.backbone = {16, 2};
  Model m(cfg);
  m.init(3);
  Rng rng(4);
  const Tensor face = testutil::random_tensor(rng, {3, 32, 32}, 0.5);
  Tensor batch = face;
  batch.reshape({3, 1, 32, 32});
  const auto lms = m.predict_landmarks(batch);
  const Tensor block = m.landmark_block(lms);
  const auto u = fuse(lms[0], extract_context(face, m.backbone()), cfg.landmark, cfg.backbone);
  for (int i = 0; i < 136; ++i) CHECK(block.data[static_cast<size_t>(i)] == u[static_cast<size_t>(i)]);
}
