#pragma once

#include <array>
#include <span>

#include "mtface/autograd.hpp"
#include "mtface/params.hpp"

namespace mtface {

// Radians. Order matches the four regressors: left yaw, left pitch, right yaw, right pitch.
struct GazeAngles {
  double left_yaw = 0.0;
  double left_pitch = 0.0;
  double right_yaw = 0.0;
  double right_pitch = 0.0;

  std::array<double, 4> as_array() const { return {left_yaw, left_pitch, right_yaw, right_pitch}; }
  static GazeAngles from_array(const std::array<double, 4>& a) { return {a[0], a[1], a[2], a[3]}; }
};

inline constexpr std::array<const char*, 4> kGazeHeads{"left_yaw", "left_pitch", "right_yaw",
                                                       "right_pitch"};

// Four independent affine regressors; parameters "gaze.<head>.weight" {1, D}
// and "gaze.<head>.bias" {1}.
class GazeHead {
 public:
  GazeHead(ParamSet& params, int input_dim);

  int input_dim() const { return input_dim_; }
  void init(Rng& rng);

  // u {B, D} -> four {B, 1} outputs in head order
  std::array<Tape::Var, 4> forward(Tape& tape, Tape::Var u);

  static int64_t parameter_count(int input_dim) { return 4 * (static_cast<int64_t>(input_dim) + 1); }

 private:
  ParamSet& params_;
  int input_dim_;
};

GazeAngles gaze_forward(std::span<const float> u, const ParamSet& params);

struct GazeLoss {
  double value = 0.0;
  std::array<double, 4> per_angle{};
};

// Mean of the four per-angle squared errors. grad (optional) is dL/dpred.
GazeLoss gaze_mse_loss(const GazeAngles& pred, const GazeAngles& gt,
                       std::array<double, 4>* grad = nullptr);

// g = (-cos(pitch) sin(yaw), -sin(pitch), -cos(pitch) cos(yaw))
std::array<double, 3> angles_to_vector(double yaw, double pitch);

struct AngularError {
  double left_deg = 0.0;
  double right_deg = 0.0;
  double mean_deg = 0.0;
};

AngularError angular_error_deg(const GazeAngles& pred, const GazeAngles& gt);

}  // namespace mtface
