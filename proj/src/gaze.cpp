#include "mtface/gaze.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mtface/error.hpp"

namespace mtface {

GazeHead::GazeHead(ParamSet& params, int input_dim) : params_(params), input_dim_(input_dim) {
  for (const char* head : kGazeHeads) {
    params_.add(std::string("gaze.") + head + ".weight", {1, input_dim});
    params_.add(std::string("gaze.") + head + ".bias", {1});
  }
}

void GazeHead::init(Rng& rng) {
  for (const char* head : kGazeHeads) {
    fill_normal(params_.at(std::string("gaze.") + head + ".weight").value, rng,
                0.1 / std::sqrt(input_dim_));
    params_.at(std::string("gaze.") + head + ".bias").value.zero();
  }
}

std::array<Tape::Var, 4> GazeHead::forward(Tape& tape, Tape::Var u) {
  require(tape.value(u).rank() == 2 && tape.value(u).dim(1) == input_dim_, ErrorKind::InvalidInput,
          "gaze head expects {B," + std::to_string(input_dim_) + "}");
  std::array<Tape::Var, 4> out;
  for (size_t i = 0; i < kGazeHeads.size(); ++i) {
    const std::string base = std::string("gaze.") + kGazeHeads[i];
    out[i] = tape.linear(u, tape.param(params_.at(base + ".weight")),
                         tape.param(params_.at(base + ".bias")));
  }
  return out;
}

GazeAngles gaze_forward(std::span<const float> u, const ParamSet& params) {
  std::array<double, 4> a{};
  for (size_t i = 0; i < kGazeHeads.size(); ++i) {
    const std::string base = std::string("gaze.") + kGazeHeads[i];
    const Tensor& w = params.at(base + ".weight").value;
    require(static_cast<int64_t>(u.size()) == w.dim(1), ErrorKind::InvalidInput,
            "gaze_forward: input dimension " + std::to_string(u.size()) + " does not match " +
                std::to_string(w.dim(1)));
    double acc = params.at(base + ".bias").value.data[0];
    for (size_t j = 0; j < u.size(); ++j) acc += static_cast<double>(w.data[j]) * u[j];
    a[i] = acc;
  }
  return GazeAngles::from_array(a);
}

GazeLoss gaze_mse_loss(const GazeAngles& pred, const GazeAngles& gt, std::array<double, 4>* grad) {
  const auto p = pred.as_array();
  const auto t = gt.as_array();
  GazeLoss out;
  for (size_t i = 0; i < 4; ++i) {
    const double e = p[i] - t[i];
    out.per_angle[i] = e * e;
    out.value += 0.25 * e * e;
    if (grad) (*grad)[i] = 0.5 * e;
  }
  return out;
}

std::array<double, 3> angles_to_vector(double yaw, double pitch) {
  return {-std::cos(pitch) * std::sin(yaw), -std::sin(pitch), -std::cos(pitch) * std::cos(yaw)};
}

namespace {

double angle_between_deg(double yaw_a, double pitch_a, double yaw_b, double pitch_b) {
  const auto a = angles_to_vector(yaw_a, pitch_a);
  const auto b = angles_to_vector(yaw_b, pitch_b);
  const double dot = std::clamp(a[0] * b[0] + a[1] * b[1] + a[2] * b[2], -1.0, 1.0);
  return std::acos(dot) * 180.0 / std::numbers::pi;
}

}  // namespace

AngularError angular_error_deg(const GazeAngles& pred, const GazeAngles& gt) {
  AngularError e;
  e.left_deg = angle_between_deg(pred.left_yaw, pred.left_pitch, gt.left_yaw, gt.left_pitch);
  e.right_deg = angle_between_deg(pred.right_yaw, pred.right_pitch, gt.right_yaw, gt.right_pitch);
  e.mean_deg = 0.5 * (e.left_deg + e.right_deg);
  return e;
}

}  // namespace mtface
