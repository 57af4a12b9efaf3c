#include "mtface/emotion.hpp"

#include <algorithm>
#include <cmath>

#include "mtface/error.hpp"

namespace mtface {

void EmotionConfig::validate() const {
  require(num_classes >= 2, ErrorKind::Configuration, "emotion.classes must be at least 2");
  require(smoothing >= 0.0 && smoothing <= 1.0, ErrorKind::Configuration,
          "emotion.smoothing must lie in [0,1]");
  require(static_cast<int>(class_names.size()) == num_classes, ErrorKind::Configuration,
          "emotion class name list does not match class count");
}

EmotionHead::EmotionHead(ParamSet& params, const EmotionConfig& cfg, int input_dim)
    : params_(params), cfg_(cfg), input_dim_(input_dim) {
  cfg_.validate();
  params_.add("emotion.fc.weight", {cfg_.num_classes, input_dim});
  params_.add("emotion.fc.bias", {cfg_.num_classes});
}

void EmotionHead::init(Rng& rng) {
  fill_normal(params_.at("emotion.fc.weight").value, rng, 0.1 / std::sqrt(input_dim_));
  params_.at("emotion.fc.bias").value.zero();
}

Tape::Var EmotionHead::forward(Tape& tape, Tape::Var u) {
  require(tape.value(u).rank() == 2 && tape.value(u).dim(1) == input_dim_, ErrorKind::InvalidInput,
          "emotion head expects {B," + std::to_string(input_dim_) + "}");
  return tape.linear(u, tape.param(params_.at("emotion.fc.weight")),
                     tape.param(params_.at("emotion.fc.bias")));
}

std::vector<double> emotion_forward(std::span<const float> u, const ParamSet& params,
                                    const EmotionConfig& cfg) {
  const Tensor& w = params.at("emotion.fc.weight").value;
  const Tensor& b = params.at("emotion.fc.bias").value;
  require(w.dim(0) == cfg.num_classes && static_cast<int64_t>(u.size()) == w.dim(1),
          ErrorKind::InvalidInput, "emotion_forward: dimension mismatch");
  std::vector<double> logits(static_cast<size_t>(cfg.num_classes));
  for (size_t c = 0; c < logits.size(); ++c) {
    double acc = b.data[c];
    for (size_t j = 0; j < u.size(); ++j) acc += static_cast<double>(w.data[c * u.size() + j]) * u[j];
    logits[c] = acc;
  }
  return logits;
}

std::vector<double> smooth_labels(int y, const EmotionConfig& cfg) {
  require(y >= 0 && y < cfg.num_classes, ErrorKind::InvalidInput,
          "emotion label " + std::to_string(y) + " out of range");
  const double c = cfg.num_classes;
  std::vector<double> t(static_cast<size_t>(cfg.num_classes), cfg.smoothing / c);
  t[static_cast<size_t>(y)] += 1.0 - cfg.smoothing;
  return t;
}

std::vector<double> class_weights(std::span<const int> labels, const EmotionConfig& cfg) {
  require(!labels.empty(), ErrorKind::InvalidInput, "class_weights: empty label set");
  std::vector<double> counts(static_cast<size_t>(cfg.num_classes), 0.0);
  for (int y : labels) {
    require(y >= 0 && y < cfg.num_classes, ErrorKind::InvalidInput, "class_weights: label out of range");
    counts[static_cast<size_t>(y)] += 1.0;
  }
  std::vector<double> f(counts.size());
  for (size_t j = 0; j < counts.size(); ++j) f[j] = 1.0 / std::max(counts[j], 1.0);
  const double fmin = *std::min_element(f.begin(), f.end());
  for (double& x : f) x /= fmin;
  return f;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (size_t i = 0; i < p.size(); ++i) total += p[i] = std::exp(logits[i] - peak);
  for (double& x : p) x /= total;
  return p;
}

double weighted_smoothed_ce(const std::vector<std::vector<double>>& logits, std::span<const int> labels,
                            std::span<const double> weights, const EmotionConfig& cfg,
                            std::vector<std::vector<double>>* grad) {
  require(!logits.empty() && logits.size() == labels.size(), ErrorKind::InvalidInput,
          "weighted_smoothed_ce: batch size mismatch");
  const size_t c = static_cast<size_t>(cfg.num_classes);
  require(weights.size() == c, ErrorKind::InvalidInput, "weighted_smoothed_ce: weight count mismatch");
  const double inv_n = 1.0 / static_cast<double>(logits.size());
  if (grad) grad->assign(logits.size(), std::vector<double>(c, 0.0));
  double total = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    require(logits[i].size() == c, ErrorKind::InvalidInput, "weighted_smoothed_ce: logit width mismatch");
    const auto target = smooth_labels(labels[i], cfg);
    const double peak = *std::max_element(logits[i].begin(), logits[i].end());
    double z = 0.0;
    for (double l : logits[i]) z += std::exp(l - peak);
    const double log_z = peak + std::log(z);
    double mass = 0.0;
    for (size_t j = 0; j < c; ++j) {
      const double wt = weights[j] * target[j];
      total -= wt * (logits[i][j] - log_z);
      mass += wt;
    }
    if (!grad) continue;
    for (size_t j = 0; j < c; ++j) {
      const double p = std::exp(logits[i][j] - log_z);
      (*grad)[i][j] = -inv_n * (weights[j] * target[j] - p * mass);
    }
  }
  return total * inv_n;
}

int argmax(std::span<const double> v) {
  require(!v.empty(), ErrorKind::InvalidInput, "argmax of empty vector");
  int best = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[static_cast<size_t>(best)]) best = static_cast<int>(i);
  return best;
}

double accuracy(std::span<const int> pred, std::span<const int> gt) {
  require(!gt.empty(), ErrorKind::InvalidInput, "accuracy: empty input");
  require(pred.size() == gt.size(), ErrorKind::InvalidInput, "accuracy: length mismatch");
  size_t hits = 0;
  for (size_t i = 0; i < gt.size(); ++i) hits += pred[i] == gt[i];
  return static_cast<double>(hits) / static_cast<double>(gt.size());
}

OrientationBin orientation_bin(double pose_yaw_deg) {
  const double a = std::abs(pose_yaw_deg);
  if (a < 15.0) return OrientationBin::Easy;
  if (a < 45.0) return OrientationBin::Medium;
  return OrientationBin::Hard;
}

const char* to_string(OrientationBin bin) {
  switch (bin) {
    case OrientationBin::Easy: return "easy";
    case OrientationBin::Medium: return "medium";
    case OrientationBin::Hard: return "hard";
  }
  return "unknown";
}

BinnedMetric bin_by_orientation(std::span<const std::optional<double>> pose_yaw_deg,
                                const std::function<double(std::span<const size_t>)>& metric) {
  std::array<std::vector<size_t>, 3> members;
  for (size_t i = 0; i < pose_yaw_deg.size(); ++i) {
    require(pose_yaw_deg[i].has_value(), ErrorKind::InvalidInput,
            "bin_by_orientation: sample " + std::to_string(i) + " has no pose_yaw_deg");
    members[static_cast<size_t>(orientation_bin(*pose_yaw_deg[i]))].push_back(i);
  }
  BinnedMetric out;
  for (size_t b = 0; b < 3; ++b) {
    out.count[b] = members[b].size();
    if (!members[b].empty()) out.value[b] = metric(members[b]);
  }
  return out;
}

}  // namespace mtface
