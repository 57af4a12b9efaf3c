#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "mtface/emotion.hpp"
#include "test_util.hpp"

using namespace mtface;

TEST_CASE("forward is affine") {
  EmotionConfig cfg;
  ParamSet params;
  EmotionHead head(params, cfg, 7);
  Rng rng(1);
  head.init(rng);
  const auto& b = params.at("emotion.fc.bias").value;
  const auto z = emotion_forward(std::vector<float>(7, 0.0f), params, cfg);
  REQUIRE(z.size() == 8);
  for (size_t j = 0; j < 8; ++j) CHECK(z[j] == static_cast<double>(b.data[j]));
  std::vector<float> u(7);
  for (float& x : u) x = static_cast<float>(rng.uniform(-1, 1));
  const auto y = emotion_forward(u, params, cfg);
  const auto& w = params.at("emotion.fc.weight").value;
  for (size_t j = 0; j < 8; ++j) {
    double acc = b.data[j];
    for (size_t k = 0; k < 7; ++k) acc += static_cast<double>(w.data[j * 7 + k]) * u[k];
    CHECK(std::abs(y[j] - acc) < 1e-6);
  }
  CHECK(testutil::error_kind_of([&] { emotion_forward(std::vector<float>(3), params, cfg); }) == ErrorKind::InvalidInput);
}

TEST_CASE("label smoothing") {
  EmotionConfig cfg;
  cfg.smoothing = 0.0;
  CHECK(smooth_labels(3, cfg)[3] == 1.0);
  cfg.smoothing = 1.0;
  for (double v : smooth_labels(3, cfg)) CHECK(v == 0.125);
  cfg.smoothing = 0.1;
  const auto t = smooth_labels(2, cfg);
  CHECK(t[2] == doctest::Approx(0.9125).epsilon(1e-15));
  CHECK(t[0] == doctest::Approx(0.0125).epsilon(1e-15));
  double sum = 0;
  for (double v : t) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(testutil::error_kind_of([&] { smooth_labels(8, cfg); }) == ErrorKind::InvalidInput);
}

TEST_CASE("class weights") {
  EmotionConfig cfg;
  cfg.num_classes = 2;
  cfg.class_names = {"a", "b"};
  std::vector<int> balanced{0, 1, 0, 1};
  CHECK(class_weights(balanced, cfg) == std::vector<double>{1.0, 1.0});
  std::vector<int> skewed(150, 0);
  for (int i = 100; i < 150; ++i) skewed[static_cast<size_t>(i)] = 1;
  const auto w = class_weights(skewed, cfg);
  CHECK(w[0] == doctest::Approx(1.0));
  CHECK(w[1] == doctest::Approx(2.0));
  std::vector<int> absent{0, 0, 0};
  CHECK(class_weights(absent, cfg)[1] == doctest::Approx(3.0));
  CHECK(testutil::error_kind_of([&] { class_weights(std::vector<int>{}, cfg); }) == ErrorKind::InvalidInput);
}

TEST_CASE("cross entropy reference values") {
  EmotionConfig cfg;
  cfg.num_classes = 4;
  cfg.class_names = {"a", "b", "c", "d"};
  const std::vector<std::vector<double>> logits{{1.0, -0.5, 0.25, 2.0}, {0.0, 0.3, -1.2, 0.7}, {3.0, 1.0, 0.0, -1.0}};
  const std::vector<int> labels{3, 1, 0};
  const std::vector<double> ones(4, 1.0);
  cfg.smoothing = 0.0;
  // values from an independent framework implementation
  CHECK(std::abs(weighted_smoothed_ce(logits, labels, ones, cfg) - 0.636653258642449) < 1e-12);
  cfg.smoothing = 0.1;
  CHECK(std::abs(weighted_smoothed_ce(logits, labels, ones, cfg) - 0.767069925309116) < 1e-12);
}

TEST_CASE("cross entropy limits") {
  EmotionConfig cfg;
  cfg.smoothing = 0.0;
  const std::vector<double> ones(8, 1.0);
  CHECK(weighted_smoothed_ce({std::vector<double>(8, 0.3)}, std::vector<int>{5}, ones, cfg) ==
        doctest::Approx(std::log(8.0)).epsilon(1e-14));
  std::vector<double> confident(8, 0.0);
  confident[2] = 60.0;
  CHECK(weighted_smoothed_ce({confident}, std::vector<int>{2}, ones, cfg) < 1e-20);
}

TEST_CASE("cross entropy gradient") {
  EmotionConfig cfg;
  Rng rng(2);
  const std::vector<int> labels{0, 3, 7, 3};
  const std::vector<double> w{1.0, 2.0, 1.0, 1.5, 3.0, 1.0, 1.0, 4.0};
  std::vector<std::vector<double>> logits(4);
  std::vector<double> flat;
  for (auto& row : logits) {
    row = testutil::random_vector(rng, 8, -3, 3);
    flat.insert(flat.end(), row.begin(), row.end());
  }
  std::vector<std::vector<double>> grad;
  const double value = weighted_smoothed_ce(logits, labels, w, cfg, &grad);
  double direct = 0.0;
  for (size_t i = 0; i < 4; ++i) {
    const auto p = softmax(logits[i]);
    const auto t = smooth_labels(labels[i], cfg);
    for (size_t j = 0; j < 8; ++j) direct -= w[j] * t[j] * std::log(p[j]) / 4.0;
  }
  CHECK(value == doctest::Approx(direct).epsilon(1e-13));
  std::vector<double> g;
  for (const auto& row : grad) g.insert(g.end(), row.begin(), row.end());
  auto f = [&](std::span<const double> x) {
    std::vector<std::vector<double>> l(4);
    for (size_t i = 0; i < 4; ++i) l[i].assign(x.begin() + static_cast<long>(i * 8), x.begin() + static_cast<long>(i * 8 + 8));
    return weighted_smoothed_ce(l, labels, w, cfg);
  };
  CHECK(testutil::max_fd_error(f, flat, g) < 1e-4);
}

TEST_CASE("argmax and accuracy") {
  CHECK(argmax(std::vector<double>{0.1, 0.5, 0.5, 0.2}) == 1);
  CHECK(accuracy(std::vector<int>{1, 2, 3}, std::vector<int>{1, 2, 3}) == 1.0);
  CHECK(accuracy(std::vector<int>{1, 2, 3}, std::vector<int>{0, 0, 0}) == 0.0);
  CHECK(accuracy(std::vector<int>{1, 2, 3, 4, 5}, std::vector<int>{1, 2, 3, 0, 0}) == doctest::Approx(0.6));
  CHECK(testutil::error_kind_of([] { accuracy(std::vector<int>{}, std::vector<int>{}); }) == ErrorKind::InvalidInput);
}

TEST_CASE("orientation bins") {
  CHECK(orientation_bin(10) == OrientationBin::Easy);
  CHECK(orientation_bin(30) == OrientationBin::Medium);
  CHECK(orientation_bin(60) == OrientationBin::Hard);
  CHECK(orientation_bin(15) == OrientationBin::Medium);
  CHECK(orientation_bin(45) == OrientationBin::Hard);
  CHECK(orientation_bin(-20) == OrientationBin::Medium);
  CHECK(std::string(to_string(OrientationBin::Hard)) == "hard");
}

TEST_CASE("binning matches direct filtering") {
  Rng rng(3);
  std::vector<std::optional<double>> poses;
  for (int i = 0; i < 500; ++i) poses.push_back(rng.uniform(-90, 90));
  const auto binned = bin_by_orientation(poses, [](std::span<const size_t> idx) { return static_cast<double>(idx.size()); });
  std::array<size_t, 3> direct{};
  for (const auto& p : poses) {
    const double a = std::abs(*p);
    ++direct[a < 15 ? 0 : (a < 45 ? 1 : 2)];
  }
  for (size_t b = 0; b < 3; ++b) {
    CHECK(binned.count[b] == direct[b]);
    CHECK(*binned.value[b] == static_cast<double>(direct[b]));
  }
}

TEST_CASE("single-bin metric equals the whole-set metric; empty bins are absent") {
  const std::vector<std::optional<double>> poses{50.0, 70.0, 89.0, 46.0};
  const std::vector<int> pred{1, 2, 3, 4}, gt{1, 0, 3, 4};
  auto metric = [&](std::span<const size_t> idx) {
    std::vector<int> p, g;
    for (size_t i : idx) {
      p.push_back(pred[i]);
      g.push_back(gt[i]);
    }
    return accuracy(p, g);
  };
  const auto binned = bin_by_orientation(poses, metric);
  CHECK_FALSE(binned.value[0].has_value());
  CHECK_FALSE(binned.value[1].has_value());
  CHECK(*binned.value[2] == accuracy(pred, gt));
}

TEST_CASE("missing pose is rejected") {
  const std::vector<std::optional<double>> poses{10.0, std::nullopt};
  CHECK(testutil::error_kind_of([&] { bin_by_orientation(poses, [](std::span<const size_t>) { return 0.0; }); }) ==
        ErrorKind::InvalidInput);
}
