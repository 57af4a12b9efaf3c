#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "mtface/autograd.hpp"
#include "test_util.hpp"

using namespace mtface;

namespace {

// Builds a graph from the leaf params and returns its output.
using Builder = std::function<Tape::Var(Tape&, std::vector<Tape::Var>&)>;

// Projects the output on a fixed random tensor and compares the tape's
// gradients with float central differences.
double check_grads(std::vector<Param>& leaves, const Builder& build, uint64_t seed = 9) {
  Tensor proj;
  auto run = [&](bool backward) {
    Tape tape;
    std::vector<Tape::Var> vars;
    for (Param& p : leaves) vars.push_back(tape.param(p));
    const Tape::Var out = build(tape, vars);
    const Tensor& y = tape.value(out);
    if (proj.empty()) {
      Rng rng(seed);
      proj = testutil::random_tensor(rng, y.shape);
    }
    double s = 0.0;
    for (size_t i = 0; i < y.data.size(); ++i) s += static_cast<double>(y.data[i]) * proj.data[i];
    if (backward) {
      tape.grad(out) = proj;
      tape.backward();
    }
    return s;
  };
  for (Param& p : leaves) p.zero_grad();
  run(true);
  double worst = 0.0;
  for (Param& p : leaves) {
    for (size_t i = 0; i < p.value.data.size(); ++i) {
      const float orig = p.value.data[i];
      const float h = 1e-2f;
      p.value.data[i] = orig + h;
      const double up = run(false);
      p.value.data[i] = orig - h;
      const double down = run(false);
      p.value.data[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      worst = std::max(worst, relative_error(p.grad.data[i], fd, 5e-2));
    }
  }
  return worst;
}

Param leaf(const std::string& name, Shape shape, Rng& rng, double scale = 1.0) {
  Param p(name, shape);
  p.value = testutil::random_tensor(rng, std::move(shape), scale);
  return p;
}

}  // namespace

TEST_CASE("conv2d matches a direct convolution") {
  Rng rng(1);
  const Tensor x = testutil::random_tensor(rng, {2, 1, 5, 5});
  const Tensor w = testutil::random_tensor(rng, {3, 2, 3, 3});
  const Tensor b = testutil::random_tensor(rng, {3});
  Tape tape;
  const Tensor& y = tape.value(tape.conv2d(tape.constant(x), tape.constant(w), tape.constant(b), 2, 1));
  REQUIRE(y.shape == Shape{3, 1, 3, 3});
  for (int o = 0; o < 3; ++o)
    for (int oy = 0; oy < 3; ++oy)
      for (int ox = 0; ox < 3; ++ox) {
        double acc = b.data[o];
        for (int c = 0; c < 2; ++c)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
              if (iy < 0 || ix < 0 || iy >= 5 || ix >= 5) continue;
              acc += static_cast<double>(w.data[((o * 2 + c) * 3 + ky) * 3 + kx]) * x.data[(c * 5 + iy) * 5 + ix];
            }
        CHECK(std::abs(y.data[(o * 3 + oy) * 3 + ox] - acc) < 1e-5);
      }
}

TEST_CASE("conv2d gradients") {
  Rng rng(2);
  std::vector<Param> leaves{leaf("x", {2, 2, 6, 6}, rng), leaf("w", {3, 2, 3, 3}, rng), leaf("b", {3}, rng)};
  CHECK(check_grads(leaves, [](Tape& t, auto& v) { return t.conv2d(v[0], v[1], v[2], 1, 1); }) < 2e-2);
  CHECK(check_grads(leaves, [](Tape& t, auto& v) { return t.conv2d(v[0], v[1], v[2], 2, 1); }) < 2e-2);
  std::vector<Param> pw{leaf("x", {4, 2, 3, 3}, rng), leaf("w", {5, 4, 1, 1}, rng)};
  CHECK(check_grads(pw, [](Tape& t, auto& v) { return t.conv2d(v[0], v[1], Tape::Var{}, 1, 0); }) < 2e-2);
}

TEST_CASE("pooling, upsampling and relu gradients") {
  Rng rng(3);
  std::vector<Param> x{leaf("x", {2, 2, 4, 4}, rng)};
  CHECK(check_grads(x, [](Tape& t, auto& v) { return t.avg_pool(v[0], 2); }) < 2e-2);
  CHECK(check_grads(x, [](Tape& t, auto& v) { return t.upsample2(v[0]); }) < 2e-2);
  CHECK(check_grads(x, [](Tape& t, auto& v) { return t.global_avg_pool(v[0]); }) < 2e-2);
  CHECK(check_grads(x, [](Tape& t, auto& v) { return t.add(v[0], v[0]); }) < 2e-2);
  // keep inputs away from the relu kink so the differences are valid
  for (float& e : x[0].value.data) e = e < 0 ? e - 0.1f : e + 0.1f;
  CHECK(check_grads(x, [](Tape& t, auto& v) { return t.relu(v[0]); }) < 2e-2);
}

TEST_CASE("linear and concat gradients") {
  Rng rng(4);
  std::vector<Param> l{leaf("x", {3, 5}, rng), leaf("w", {4, 5}, rng), leaf("b", {4}, rng), leaf("y", {3, 2}, rng)};
  CHECK(check_grads(l, [](Tape& t, auto& v) { return t.concat_cols(t.linear(v[0], v[1], v[2]), v[3]); }) < 2e-2);
}

TEST_CASE("au graph, gcn and readout gradients") {
  Rng rng(5);
  std::vector<Param> l{leaf("u", {2, 4, 3}, rng), leaf("wg", {3, 3}, rng, 0.5), leaf("rw", {4, 3}, rng),
                       leaf("rb", {4}, rng)};
  CHECK(check_grads(l, [](Tape& t, auto& v) { return t.au_graph(v[0]); }) < 2e-2);
  CHECK(check_grads(l, [](Tape& t, auto& v) {
          const auto adj = t.au_graph(v[0]);
          return t.au_readout(t.gcn(v[0], adj, v[1]), v[2], v[3]);
        }) < 2e-2);
}

TEST_CASE("au graph rows are normalized with unit self loops") {
  Rng rng(6);
  Tape tape;
  const Tensor& a = tape.value(tape.au_graph(tape.constant(testutil::random_tensor(rng, {1, 5, 4}))));
  for (int i = 0; i < 5; ++i) {
    double row = 0.0;
    for (int j = 0; j < 5; ++j) row += a.data[i * 5 + j];
    CHECK(row == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("frozen params receive no gradient") {
  Rng rng(7);
  Param w = leaf("w", {2, 3}, rng);
  Param x = leaf("x", {1, 3}, rng);
  w.trainable = false;
  w.grad.data.assign(w.grad.data.size(), 0.0f);
  Tape tape;
  const auto y = tape.linear(tape.param(x), tape.param(w), Tape::Var{});
  CHECK_FALSE(tape.requires_grad(tape.param(w)));
  tape.grad(y) = Tensor({1, 2}, 1.0f);
  tape.backward();
  for (float g : w.grad.data) CHECK(g == 0.0f);
  bool any = false;
  for (float g : x.grad.data) any = any || g != 0.0f;
  CHECK(any);
}

TEST_CASE("reshape keeps data and routes gradients") {
  Rng rng(8);
  std::vector<Param> x{leaf("x", {2, 6}, rng)};
  CHECK(check_grads(x, [](Tape& t, auto& v) { return t.reshape(v[0], {3, 4}); }) < 2e-2);
  Tape tape;
  CHECK_THROWS_AS(tape.reshape(tape.constant(Tensor({2, 3})), {4, 2}), Error);
}
