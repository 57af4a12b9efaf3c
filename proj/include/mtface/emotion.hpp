#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtface/autograd.hpp"
#include "mtface/params.hpp"

namespace mtface {

struct EmotionConfig {
  int num_classes = 8;
  double smoothing = 0.1;
  std::vector<std::string> class_names{"neutral", "happiness", "sadness", "surprise",
                                       "fear",    "disgust",   "anger",   "contempt"};

  void validate() const;
};

// Single affine classifier; parameters "emotion.fc.weight" {C, D} and "emotion.fc.bias" {C}.
class EmotionHead {
 public:
  EmotionHead(ParamSet& params, const EmotionConfig& cfg, int input_dim);

  const EmotionConfig& config() const { return cfg_; }
  void init(Rng& rng);
  Tape::Var forward(Tape& tape, Tape::Var u);  // {B, D} -> {B, C}

  static int64_t parameter_count(const EmotionConfig& cfg, int input_dim) {
    return static_cast<int64_t>(cfg.num_classes) * (input_dim + 1);
  }

 private:
  ParamSet& params_;
  EmotionConfig cfg_;
  int input_dim_;
};

std::vector<double> emotion_forward(std::span<const float> u, const ParamSet& params,
                                    const EmotionConfig& cfg);

// (1 - alpha) * onehot(y) + alpha / C
std::vector<double> smooth_labels(int y, const EmotionConfig& cfg);

// f_j / min_k f_k with f_j = 1 / max(count_j, 1); equals max count / count_j.
std::vector<double> class_weights(std::span<const int> labels, const EmotionConfig& cfg);

std::vector<double> softmax(std::span<const double> logits);

// -(1/N) sum_i sum_j w_j ytilde_ij log p_ij over a batch of logit rows.
// grad (optional) receives dL/dlogits with the same layout.
double weighted_smoothed_ce(const std::vector<std::vector<double>>& logits, std::span<const int> labels,
                            std::span<const double> weights, const EmotionConfig& cfg,
                            std::vector<std::vector<double>>* grad = nullptr);

// Lowest index wins ties.
int argmax(std::span<const double> v);
double accuracy(std::span<const int> pred, std::span<const int> gt);

enum class OrientationBin { Easy, Medium, Hard };

// |yaw| in [0,15) easy, [15,45) medium, [45,inf) hard.
OrientationBin orientation_bin(double pose_yaw_deg);
const char* to_string(OrientationBin bin);

struct BinnedMetric {
  std::array<std::optional<double>, 3> value;  // absent when the bin is empty
  std::array<size_t, 3> count{};
};

// `metric` is evaluated on the sample indices of each non-empty bin.
BinnedMetric bin_by_orientation(std::span<const std::optional<double>> pose_yaw_deg,
                                const std::function<double(std::span<const size_t>)>& metric);

}  // namespace mtface
