#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "mtface/au.hpp"
#include "test_util.hpp"

using namespace mtface;

namespace {

struct Fixture {
  AUConfig cfg;
  ParamSet params;
  std::unique_ptr<AUHead> head;
  explicit Fixture(int n = 4, int d = 3, int in = 5, uint64_t seed = 1) {
    cfg.num_aus = n;
    cfg.dim = d;
    cfg.ids.clear();
    for (int i = 0; i < n; ++i) cfg.ids.push_back(i + 1);
    head = std::make_unique<AUHead>(params, cfg, in);
    Rng rng(seed);
    head->init(rng);
    for (Param& p : params)
      for (float& v : p.value.data) v += static_cast<float>(rng.uniform(-0.2, 0.2));
  }
};

}  // namespace

TEST_CASE("config validation") {
  AUConfig c;
  CHECK_NOTHROW(c.validate());
  c.ids.pop_back();
  CHECK(testutil::error_kind_of([&] { c.validate(); }) == ErrorKind::Configuration);
}

TEST_CASE("default head shapes") {
  ParamSet params;
  AUHead head(params, AUConfig{}, 392);
  CHECK(params.at("au.project.weight").value.shape == Shape{12 * 64, 392});
  CHECK(AUHead::parameter_count(AUConfig{}, 392) == 12 * 64 * 392 + 12 * 64 + 64 * 64 + 12 * 64 + 12);
  std::vector<float> u(392, 0.1f);
  const auto vecs = au_project(u, params, AUConfig{});
  CHECK(vecs.size() == 12);
  CHECK(vecs[0].size() == 64);
}

TEST_CASE("zero input projects to the bias") {
  Fixture f;
  std::vector<float> u(5, 0.0f);
  const auto v = au_project(u, f.params, f.cfg);
  const Tensor& b = f.params.at("au.project.bias").value;
  for (size_t i = 0; i < 4; ++i)
    for (size_t k = 0; k < 3; ++k) CHECK(v[i][k] == static_cast<double>(b.data[i * 3 + k]));
  CHECK(testutil::error_kind_of([&] { au_project(std::vector<float>(4), f.params, f.cfg); }) == ErrorKind::InvalidInput);
}

TEST_CASE("projection matches a matrix-vector oracle") {
  Fixture f;
  Rng rng(2);
  std::vector<float> u(5);
  for (float& x : u) x = static_cast<float>(rng.uniform(-1, 1));
  const auto v = au_project(u, f.params, f.cfg);
  const Tensor& w = f.params.at("au.project.weight").value;
  const Tensor& b = f.params.at("au.project.bias").value;
  for (int row = 0; row < 12; ++row) {
    long double acc = b.data[static_cast<size_t>(row)];
    for (int j = 0; j < 5; ++j) acc += static_cast<long double>(w.data[static_cast<size_t>(row * 5 + j)]) * u[static_cast<size_t>(j)];
    CHECK(std::abs(v[static_cast<size_t>(row / 3)][static_cast<size_t>(row % 3)] - static_cast<double>(acc)) < 1e-6);
  }
}

TEST_CASE("graph of identical vectors is uniform") {
  const AUVectors v(5, std::vector<double>{1.0, -2.0, 0.5});
  const AUGraph g = build_au_graph(v);
  for (double a : g.adjacency) CHECK(a == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("graph of orthogonal vectors is the identity") {
  const AUVectors v{{1, 0, 0}, {0, 3, 0}, {0, 0, -2}};
  const AUGraph g = build_au_graph(v);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(g.at(i, j) == (i == j ? 1.0 : 0.0));
}

TEST_CASE("graph matches a pairwise cosine oracle") {
  Rng rng(3);
  AUVectors v(3);
  for (auto& x : v) x = testutil::random_vector(rng, 4);
  const AUGraph g = build_au_graph(v);
  for (int i = 0; i < 3; ++i) {
    double raw[3], total = 0.0;
    for (int j = 0; j < 3; ++j) {
      double dot = 0, ni = 0, nj = 0;
      for (int k = 0; k < 4; ++k) {
        dot += v[i][k] * v[j][k];
        ni += v[i][k] * v[i][k];
        nj += v[j][k] * v[j][k];
      }
      raw[j] = i == j ? 1.0 : std::max(0.0, dot / std::sqrt(ni * nj));
      total += raw[j];
    }
    for (int j = 0; j < 3; ++j) CHECK(std::abs(g.at(i, j) - raw[j] / total) < 1e-12);
  }
}

TEST_CASE("graph rejects zero vectors") {
  const AUVectors v{{1, 0}, {0, 0}};
  CHECK(testutil::error_kind_of([&] { build_au_graph(v); }) == ErrorKind::DegenerateInput);
}

TEST_CASE("identity adjacency with zero weights is a relu residual") {
  Fixture f;
  f.params.at("au.gcn.weight").value.zero();
  Rng rng(4);
  AUVectors v(4);
  for (auto& x : v) x = testutil::random_vector(rng, 3);
  AUGraph id{4, std::vector<double>(16, 0.0)};
  for (int i = 0; i < 4; ++i) id.adjacency[static_cast<size_t>(i * 5)] = 1.0;
  const auto out = gcn_update(v, id, f.params);
  for (size_t i = 0; i < 4; ++i)
    for (size_t k = 0; k < 3; ++k) CHECK(std::abs(out[i][k] - std::max(0.0, v[i][k])) < 1e-9);
}

TEST_CASE("equal vectors under a uniform graph stay equal") {
  Fixture f;
  const AUVectors v(4, std::vector<double>{0.3, -0.1, 0.7});
  const auto out = gcn_update(v, build_au_graph(v), f.params);
  for (size_t i = 1; i < 4; ++i) CHECK(out[i] == out[0]);
}

TEST_CASE("gcn matches direct summation") {
  Fixture f;
  Rng rng(5);
  AUVectors v(4);
  for (auto& x : v) x = testutil::random_vector(rng, 3);
  const AUGraph g = build_au_graph(v);
  const auto out = gcn_update(v, g, f.params);
  const Tensor& w = f.params.at("au.gcn.weight").value;
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 3; ++k) {
      long double z = v[i][k];
      for (int j = 0; j < 4; ++j)
        for (int m = 0; m < 3; ++m) z += static_cast<long double>(g.at(i, j)) * v[j][m] * w.data[static_cast<size_t>(m * 3 + k)];
      CHECK(std::abs(out[i][k] - std::max(0.0, static_cast<double>(z))) < 1e-6);
    }
}

TEST_CASE("sigmoid readout") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(sigmoid(-800.0) == doctest::Approx(0.0));
  Fixture f;
  f.params.at("au.readout.weight").value.zero();
  f.params.at("au.readout.bias").value.zero();
  for (double p : au_probabilities(AUVectors(4, {1, 2, 3}), f.params)) CHECK(p == 0.5);
  Fixture g;
  Rng rng(6);
  AUVectors v(4);
  for (auto& x : v) x = testutil::random_vector(rng, 3);
  const auto p = au_probabilities(v, g.params);
  const Tensor& w = g.params.at("au.readout.weight").value;
  const Tensor& b = g.params.at("au.readout.bias").value;
  for (size_t i = 0; i < 4; ++i) {
    double z = b.data[i];
    for (size_t k = 0; k < 3; ++k) z += w.data[i * 3 + k] * v[i][k];
    CHECK(std::abs(p[i] - 1.0 / (1.0 + std::exp(-z))) < 1e-12);
  }
}

TEST_CASE("tape head matches the reference path") {
  Fixture f(5, 4, 6, 7);
  Rng rng(8);
  const Tensor u = testutil::random_tensor(rng, {3, 6});
  Tape tape;
  const Tensor& logits = tape.value(f.head->forward(tape, tape.constant(u)));
  for (int s = 0; s < 3; ++s) {
    const auto vecs = au_project(std::span<const float>(u.ptr() + s * 6, 6), f.params, f.cfg);
    const auto p = au_probabilities(gcn_update(vecs, build_au_graph(vecs), f.params), f.params);
    for (int i = 0; i < 5; ++i) CHECK(std::abs(sigmoid(logits.data[static_cast<size_t>(s * 5 + i)]) - p[static_cast<size_t>(i)]) < 1e-5);
  }
}

TEST_CASE("zero parameters give probability one half") {
  AUConfig cfg;
  ParamSet params;
  AUHead head(params, cfg, 10);
  Tape tape;
  const Tensor& logits = tape.value(head.forward(tape, tape.constant(Tensor({2, 10}, 1.0f))));
  for (float z : logits.data) CHECK(sigmoid(z) == 0.5);
}

TEST_CASE("asymmetric loss perfect cases") {
  const std::vector<double> w{1.0, 2.0, 0.5};
  CHECK(weighted_asymmetric_loss(std::vector<double>{1.0, 1.0, 1.0}, std::vector<int>{1, 1, 1}, w) < 1e-6);
  CHECK(weighted_asymmetric_loss(std::vector<double>{0.0, 0.0, 0.0}, std::vector<int>{0, 0, 0}, w) < 1e-6);
}

TEST_CASE("asymmetric loss direct value and gradient") {
  const std::vector<double> w{1.0, 2.0}, p{0.8, 0.3};
  const std::vector<int> y{1, 0};
  std::vector<double> g;
  const double value = weighted_asymmetric_loss(p, y, w, &g);
  const double expected = -(1.0 * std::log(0.8) + 2.0 * 0.3 * std::log(0.7)) / 2.0;
  CHECK(value == doctest::Approx(expected).epsilon(1e-14));
  auto f = [&](std::span<const double> x) { return weighted_asymmetric_loss(x, y, w); };
  CHECK(testutil::max_fd_error(f, p, g) < 1e-4);
}

TEST_CASE("asymmetric loss logit gradient") {
  Rng rng(9);
  const Tensor logits = testutil::random_tensor(rng, {3, 4}, 3.0);
  const std::vector<std::vector<int>> labels{{1, 0, 0, 1}, {0, 0, 1, 1}, {1, 1, 0, 0}};
  const std::vector<double> w{0.5, 1.5, 1.0, 1.0};
  Tensor grad;
  weighted_asymmetric_loss_logits(logits, labels, w, &grad);
  std::vector<double> x(logits.data.begin(), logits.data.end()), g(grad.data.begin(), grad.data.end());
  auto f = [&](std::span<const double> xs) {
    double total = 0.0;
    for (int s = 0; s < 3; ++s) {
      std::vector<double> p(4);
      for (int i = 0; i < 4; ++i) p[static_cast<size_t>(i)] = sigmoid(xs[static_cast<size_t>(s * 4 + i)]);
      total += weighted_asymmetric_loss(p, labels[static_cast<size_t>(s)], w);
    }
    return total / 3.0;
  };
  CHECK(testutil::max_fd_error(f, x, g, 1e-6, 1e-5) < 1e-4);
}

TEST_CASE("au weights") {
  CHECK(compute_au_weights({{1, 1}, {0, 0}, {1, 1}}) == std::vector<double>{1.0, 1.0});
  const auto w = compute_au_weights({{1, 1}, {1, 0}});
  CHECK(w[0] == doctest::Approx(2.0 / 3.0));
  CHECK(w[1] == doctest::Approx(4.0 / 3.0));
  const auto floored = compute_au_weights({{1, 0}, {1, 0}});
  CHECK(std::isfinite(floored[1]));
  CHECK(floored[1] == doctest::Approx(2.0 * floored[0]));
  CHECK(testutil::error_kind_of([] { compute_au_weights({}); }) == ErrorKind::InvalidInput);
}

TEST_CASE("au f1") {
  const std::vector<std::vector<int>> labels{{1, 0}, {0, 1}, {1, 1}};
  std::vector<std::vector<double>> perfect{{0.9, 0.1}, {0.2, 0.8}, {0.7, 0.6}};
  CHECK(au_f1(perfect, labels).macro == 1.0);
  std::vector<std::vector<double>> none{{0.1, 0.1}, {0.1, 0.1}, {0.1, 0.1}};
  CHECK(au_f1(none, labels).per_au == std::vector<double>{0.0, 0.0});
  // tp=3, fp=1, fn=2 on a single AU
  std::vector<std::vector<int>> y;
  std::vector<std::vector<double>> p;
  for (int v : {1, 1, 1, 0, 1, 1}) y.push_back({v, 0});
  for (double v : {0.9, 0.9, 0.9, 0.9, 0.1, 0.1}) p.push_back({v, 0.0});
  const AUF1 f = au_f1(p, y);
  CHECK(f.per_au[0] == doctest::Approx(6.0 / 9.0));
  CHECK(f.per_au[1] == 1.0);
}
