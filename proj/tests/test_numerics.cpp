#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "mtface/numerics.hpp"
#include "test_util.hpp"

using namespace mtface;

TEST_CASE("softmax of a constant map is uniform") {
  const Heatmap p = spatial_softmax(Heatmap(4, 6, 3.7));
  for (double v : p.values()) CHECK(v == doctest::Approx(1.0 / 24).epsilon(1e-15));
}

TEST_CASE("softmax is shift invariant and sums to one") {
  Rng rng(3);
  Heatmap h(5, 7);
  for (double& v : h.values()) v = rng.uniform(-20, 20);
  Heatmap shifted = h;
  for (double& v : shifted.values()) v += 1000.0;
  const Heatmap a = spatial_softmax(h), b = spatial_softmax(shifted);
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(a.values()[i] - b.values()[i]) < 1e-12);
    sum += a.values()[i];
  }
  CHECK(std::abs(sum - 1.0) < 1e-12);
}

TEST_CASE("temperature sharpens toward the maximum") {
  Heatmap h(3, 3, 0.0);
  h.at(1, 2) = 1.0;
  CHECK(spatial_softmax(h, 0.01).at(1, 2) > 0.999);
  CHECK(spatial_softmax(h, 100.0).at(1, 2) < 0.2);
}

TEST_CASE("soft_argmax on one-hot maps returns the cell exactly") {
  for (int r : {0, 3, 63})
    for (int c : {0, 17, 63}) {
      Heatmap p(64, 64, 0.0);
      p.at(r, c) = 1.0;
      const Vec2 mu = soft_argmax(p);
      CHECK(mu[0] == static_cast<double>(c));
      CHECK(mu[1] == static_cast<double>(r));
    }
}

TEST_CASE("soft_argmax on a uniform map is the grid centre") {
  const Vec2 mu = soft_argmax(Heatmap(64, 64, 1.0 / 4096));
  CHECK(std::abs(mu[0] - 31.5) < 1e-9);
  CHECK(std::abs(mu[1] - 31.5) < 1e-9);
  const Vec2 rect = soft_argmax(Heatmap(4, 10, 1.0 / 40));
  CHECK(std::abs(rect[0] - 4.5) < 1e-12);
  CHECK(std::abs(rect[1] - 1.5) < 1e-12);
}

TEST_CASE("soft_argmax rejects unnormalized input") {
  CHECK(testutil::error_kind_of([] { soft_argmax(Heatmap(4, 4, 1.0)); }) == ErrorKind::InvalidInput);
}

TEST_CASE("heatmaps smaller than 2x2 are rejected") {
  CHECK_THROWS_AS(Heatmap(1, 5), Error);
}

TEST_CASE("sum_normalize requires a positive total") {
  CHECK_THROWS_AS(sum_normalize(Heatmap(3, 3, 0.0)), Error);
  const Heatmap p = sum_normalize(Heatmap(2, 2, 5.0));
  CHECK(p.at(1, 1) == doctest::Approx(0.25));
}

TEST_CASE("pca of a one-hot map hits the eigenvalue floor") {
  Heatmap p(8, 8, 0.0);
  p.at(2, 5) = 1.0;
  const HeatmapStats s = heatmap_pca(p, soft_argmax(p));
  CHECK(s.lambda1 == kEigenFloor);
  CHECK(s.lambda2 == kEigenFloor);
}

TEST_CASE("pca of an axis-aligned two-point map") {
  // mass split between (1,4) and (7,4): variance 9 along x, none along y
  Heatmap p(8, 8, 0.0);
  p.at(4, 1) = 0.5;
  p.at(4, 7) = 0.5;
  const HeatmapStats s = heatmap_pca(p, soft_argmax(p), 0.0);
  CHECK(s.lambda1 == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(std::abs(s.lambda2) < 1e-12);
  CHECK(std::abs(std::abs(s.v1[0]) - 1.0) < 1e-12);
}

TEST_CASE("pca matches a direct covariance oracle") {
  Rng rng(11);
  Heatmap h(9, 6);
  for (double& v : h.values()) v = rng.uniform(0.0, 1.0);
  const Heatmap p = sum_normalize(h);
  const Vec2 mu = soft_argmax(p);
  long double sxx = 0, sxy = 0, syy = 0;
  for (int r = 0; r < 9; ++r)
    for (int c = 0; c < 6; ++c) {
      const long double w = p.at(r, c), dx = c - mu[0], dy = r - mu[1];
      sxx += w * dx * dx;
      sxy += w * dx * dy;
      syy += w * dy * dy;
    }
  const long double tr = sxx + syy, det = sxx * syy - sxy * sxy;
  const long double disc = std::sqrt(tr * tr / 4 - det);
  const HeatmapStats s = heatmap_pca(p, mu, 0.0);
  CHECK(std::abs(s.lambda1 - static_cast<double>(tr / 2 + disc)) < 1e-12);
  CHECK(std::abs(s.lambda2 - static_cast<double>(tr / 2 - disc)) < 1e-12);
  // eigenvector check: C v = lambda v
  const double cx = static_cast<double>(sxx) * s.v1[0] + static_cast<double>(sxy) * s.v1[1];
  const double cy = static_cast<double>(sxy) * s.v1[0] + static_cast<double>(syy) * s.v1[1];
  CHECK(std::abs(cx - s.lambda1 * s.v1[0]) < 1e-12);
  CHECK(std::abs(cy - s.lambda1 * s.v1[1]) < 1e-12);
  CHECK(std::abs(s.v1[0] * s.v2[0] + s.v1[1] * s.v2[1]) < 1e-12);
}

TEST_CASE("symmetric_eigen2 reconstructs random matrices") {
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    const double a = rng.uniform(-3, 3), b = rng.uniform(-3, 3), c = rng.uniform(-3, 3);
    double l1, l2;
    Vec2 v1, v2;
    symmetric_eigen2(a, b, c, l1, l2, v1, v2);
    CHECK(l1 >= l2);
    CHECK(std::abs(l1 * v1[0] * v1[0] + l2 * v2[0] * v2[0] - a) < 1e-12);
    CHECK(std::abs(l1 * v1[0] * v1[1] + l2 * v2[0] * v2[1] - b) < 1e-12);
    CHECK(std::abs(l1 * v1[1] * v1[1] + l2 * v2[1] * v2[1] - c) < 1e-12);
  }
}

TEST_CASE("cosine similarity") {
  const std::vector<double> a{1, 0, 0}, b{0, 2, 0}, c{-3, 0, 0};
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
  CHECK(cosine_similarity(a, b) == 0.0);
  CHECK(cosine_similarity(a, c) == doctest::Approx(-1.0));
  const std::vector<double> z{0, 0, 0};
  CHECK(testutil::error_kind_of([&] { cosine_similarity(a, z); }) == ErrorKind::DegenerateInput);
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const auto u = testutil::random_vector(rng, 7), v = testutil::random_vector(rng, 7);
    const double s = cosine_similarity(u, v);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
    CHECK(s == doctest::Approx(cosine_similarity(v, u)).epsilon(1e-15));
  }
}

TEST_CASE("finite differences of a polynomial") {
  auto f = [](std::span<const double> x) { return x[0] * x[0] * x[1] + 3.0 * x[1]; };
  const std::vector<double> x{2.0, -1.0};
  const auto g = finite_diff_gradient(f, x, 1e-5);
  CHECK(g[0] == doctest::Approx(-4.0).epsilon(1e-8));
  CHECK(g[1] == doctest::Approx(7.0).epsilon(1e-8));
}

TEST_CASE("relative error uses the floor for tiny values") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
  CHECK(relative_error(0.0, 1e-12, 1e-8) == doctest::Approx(1e-4));
}

TEST_CASE("rng streams are reproducible") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.raw() == b.raw());
  Rng c(1);
  double m = 0, v = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = c.normal();
    m += x;
    v += x * x;
  }
  CHECK(std::abs(m / n) < 0.03);
  CHECK(std::abs(v / n - 1.0) < 0.05);
  const auto p = permutation(10, c);
  std::vector<size_t> sorted(p);
  std::sort(sorted.begin(), sorted.end());
  for (size_t i = 0; i < 10; ++i) CHECK(sorted[i] == i);
}
