#pragma once

#include <optional>
#include <vector>

#include "mtface/autograd.hpp"
#include "mtface/numerics.hpp"
#include "mtface/params.hpp"

namespace mtface {

struct LandmarkConfig {
  int num_landmarks = 68;
  int num_stacks = 4;
  int input_size = 256;
  int heatmap_size = 64;
  int channels = 64;

  void validate() const;
  // Crop pixels per heatmap cell.
  int scale() const { return input_size / heatmap_size; }
  // Number of 2x downsamplings inside one hourglass (bottom resolution is 4x4).
  int depth() const;
};

struct LandmarkSet {
  std::vector<Vec2> coords;
  std::vector<bool> visible;  // empty means all visible

  size_t size() const { return coords.size(); }
};

using HeatmapStack = std::vector<Heatmap>;

enum class Distance { L1, SmoothL1 };

// Stacked hourglass. Parameters live under "landmark." in the shared ParamSet.
class HourglassNet {
 public:
  HourglassNet(ParamSet& params, const LandmarkConfig& cfg);

  const LandmarkConfig& config() const { return cfg_; }

  void init(Rng& rng);

  // image: {3, B, S, S} in [0,1]. Returns one {N, B, H, W} logit map per stack.
  std::vector<Tape::Var> forward(Tape& tape, Tape::Var image);

  static int64_t parameter_count(const LandmarkConfig& cfg);

 private:
  struct Conv {
    Param* weight = nullptr;
    Param* bias = nullptr;
  };
  struct Residual {
    Conv conv1, conv2;
  };

  Conv add_conv(const std::string& name, int cout, int cin, int k);
  Residual add_residual(const std::string& name);
  Tape::Var apply(Tape& tape, const Conv& c, Tape::Var x, int stride, int pad);
  Tape::Var apply(Tape& tape, const Residual& r, Tape::Var x);
  Tape::Var hourglass(Tape& tape, int stack, int level, Tape::Var x);

  ParamSet& params_;
  LandmarkConfig cfg_;
  Conv stem_;
  Residual stem_res_;
  // per stack, per level (index level-1): up1, low1, low3; plus the bottom low2
  std::vector<std::vector<std::array<Residual, 3>>> levels_;
  std::vector<Residual> bottom_;
  std::vector<Conv> feat_, heat_, merge_feat_, merge_heat_;
};

// Splits the final {N, B, H, W} logits of sample `b` into N heatmaps.
HeatmapStack stack_from_tensor(const Tensor& logits, int64_t b);

// Softmax then soft-argmax per landmark, scaled to crop pixels.
LandmarkSet decode_landmarks(const HeatmapStack& final_stack, const LandmarkConfig& cfg,
                             double temperature = 1.0);

double distance_value(double r, Distance d);
double distance_slope(double r, Distance d);

// One landmark's STAR term with fixed principal statistics. Fills dL/dp when
// `grad_p` is given (gradient through mu only; stats are constants).
double star_term(const Heatmap& p, const Vec2& target, const HeatmapStats& stats, Distance d,
                 Heatmap* grad_p = nullptr);

struct StarLoss {
  double value = 0.0;
  // Gradient w.r.t. the raw heatmaps, same layout as the input stacks.
  std::vector<HeatmapStack> grad;
};

// Mean STAR term over landmarks and stacks. `targets` are in the heatmap frame.
// When `frozen_stats` is given it supplies the principal statistics per
// [stack][landmark] instead of computing them from the current heatmaps.
StarLoss star_loss(const std::vector<HeatmapStack>& stacks, const LandmarkSet& targets,
                   Distance d = Distance::SmoothL1, double temperature = 1.0,
                   const std::vector<std::vector<HeatmapStats>>* frozen_stats = nullptr);

// Batched training form over tape outputs. Returns the mean loss over
// stacks, samples and landmarks and writes logit gradients to `grads`.
// targets[b] is in the heatmap frame.
double star_loss_batch(const std::vector<const Tensor*>& stacks,
                       const std::vector<LandmarkSet>& targets, Distance d,
                       std::vector<Tensor>* grads);

double nme_interocular(const LandmarkSet& pred, const LandmarkSet& gt, size_t left_eye,
                       size_t right_eye);

// Outer eye corners for the standard 68 and 98 point layouts.
std::pair<size_t, size_t> default_eye_indices(int num_landmarks);

}  // namespace mtface
