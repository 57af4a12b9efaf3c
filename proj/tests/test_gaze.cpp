#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <numbers>

#include "doctest.h"
#include "mtface/gaze.hpp"
#include "test_util.hpp"

using namespace mtface;

TEST_CASE("zero input returns the biases") {
  ParamSet params;
  GazeHead head(params, 6);
  Rng rng(1);
  head.init(rng);
  const double biases[4] = {0.1, -0.2, 0.3, -0.4};
  for (size_t k = 0; k < 4; ++k)
    params.at(std::string("gaze.") + kGazeHeads[k] + ".bias").value.data[0] = static_cast<float>(biases[k]);
  const GazeAngles g = gaze_forward(std::vector<float>(6, 0.0f), params);
  for (size_t k = 0; k < 4; ++k) CHECK(g.as_array()[k] == static_cast<double>(static_cast<float>(biases[k])));
  CHECK(GazeHead::parameter_count(392) == 4 * 393);
}

TEST_CASE("heads are independent") {
  ParamSet params;
  GazeHead head(params, 4);
  Rng rng(2);
  head.init(rng);
  const std::vector<float> u{0.5f, -1.f, 2.f, 0.25f};
  const GazeAngles before = gaze_forward(u, params);
  params.at("gaze.left_yaw.weight").value.data[1] += 0.5f;
  const GazeAngles after = gaze_forward(u, params);
  CHECK(after.left_yaw != before.left_yaw);
  CHECK(after.left_pitch == before.left_pitch);
  CHECK(after.right_yaw == before.right_yaw);
  CHECK(after.right_pitch == before.right_pitch);
}

TEST_CASE("forward matches a dot-product oracle and the tape") {
  ParamSet params;
  GazeHead head(params, 5);
  Rng rng(3);
  head.init(rng);
  const Tensor u = testutil::random_tensor(rng, {2, 5});
  Tape tape;
  const auto out = head.forward(tape, tape.constant(u));
  for (int s = 0; s < 2; ++s) {
    const GazeAngles g = gaze_forward(std::span<const float>(u.ptr() + s * 5, 5), params);
    for (size_t k = 0; k < 4; ++k) {
      const Tensor& w = params.at(std::string("gaze.") + kGazeHeads[k] + ".weight").value;
      double z = params.at(std::string("gaze.") + kGazeHeads[k] + ".bias").value.data[0];
      for (int j = 0; j < 5; ++j) z += static_cast<double>(w.data[static_cast<size_t>(j)]) * u.data[static_cast<size_t>(s * 5 + j)];
      CHECK(std::abs(g.as_array()[k] - z) < 1e-6);
      CHECK(std::abs(tape.value(out[k]).data[static_cast<size_t>(s)] - z) < 1e-5);
    }
  }
  CHECK(testutil::error_kind_of([&] { gaze_forward(std::vector<float>(3), params); }) == ErrorKind::InvalidInput);
}

TEST_CASE("mse loss") {
  const GazeAngles a{0.1, 0.2, -0.3, 0.4};
  CHECK(gaze_mse_loss(a, a).value == 0.0);
  GazeAngles b = a;
  b.right_yaw += 0.1;
  CHECK(gaze_mse_loss(b, a).value == doctest::Approx(0.0025).epsilon(1e-12));
  CHECK(gaze_mse_loss(b, a).per_angle[2] == doctest::Approx(0.01).epsilon(1e-12));
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    const auto p = testutil::random_vector(rng, 4), q = testutil::random_vector(rng, 4);
    const GazeAngles gt = GazeAngles::from_array({q[0], q[1], q[2], q[3]});
    std::array<double, 4> g{};
    const double v = gaze_mse_loss(GazeAngles::from_array({p[0], p[1], p[2], p[3]}), gt, &g).value;
    double direct = 0.0;
    for (int k = 0; k < 4; ++k) direct += (p[k] - q[k]) * (p[k] - q[k]) / 4.0;
    CHECK(v == doctest::Approx(direct).epsilon(1e-14));
    auto f = [&](std::span<const double> x) { return gaze_mse_loss(GazeAngles::from_array({x[0], x[1], x[2], x[3]}), gt).value; };
    CHECK(testutil::max_fd_error(f, p, g) < 1e-4);
  }
}

TEST_CASE("angles to vector") {
  const auto f = angles_to_vector(0, 0);
  CHECK(f == std::array<double, 3>{-0.0, -0.0, -1.0});
  const auto q = angles_to_vector(std::numbers::pi / 2, 0);
  CHECK(std::abs(q[0] + 1.0) < 1e-9);
  CHECK(std::abs(q[1]) < 1e-9);
  CHECK(std::abs(q[2]) < 1e-9);
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const auto g = angles_to_vector(rng.uniform(-3, 3), rng.uniform(-1.5, 1.5));
    CHECK(std::abs(std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]) - 1.0) < 1e-9);
  }
}

TEST_CASE("angular error") {
  const GazeAngles a{0.1, 0.2, -0.3, 0.4};
  CHECK(angular_error_deg(a, a).mean_deg < 1e-6);
  const GazeAngles zero{}, quarter{std::numbers::pi / 2, 0, std::numbers::pi / 2, 0};
  const AngularError e = angular_error_deg(quarter, zero);
  CHECK(e.left_deg == doctest::Approx(90.0).epsilon(1e-12));
  CHECK(e.mean_deg == doctest::Approx(90.0).epsilon(1e-12));
  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    const GazeAngles p{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const GazeAngles g{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    auto eye = [](double y1, double p1, double y2, double p2) {
      const double dot = std::cos(p1) * std::sin(y1) * std::cos(p2) * std::sin(y2) + std::sin(p1) * std::sin(p2) +
                         std::cos(p1) * std::cos(y1) * std::cos(p2) * std::cos(y2);
      return std::acos(std::clamp(dot, -1.0, 1.0)) * 180.0 / std::numbers::pi;
    };
    const double l = eye(p.left_yaw, p.left_pitch, g.left_yaw, g.left_pitch);
    const double r = eye(p.right_yaw, p.right_pitch, g.right_yaw, g.right_pitch);
    const AngularError got = angular_error_deg(p, g);
    CHECK(std::abs(got.left_deg - l) < 1e-6);
    CHECK(std::abs(got.right_deg - r) < 1e-6);
    CHECK(std::abs(got.mean_deg - (l + r) / 2) < 1e-6);
  }
}
