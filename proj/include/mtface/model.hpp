#pragma once

#include <memory>
#include <vector>

#include "mtface/au.hpp"
#include "mtface/emotion.hpp"
#include "mtface/fusion.hpp"
#include "mtface/gaze.hpp"
#include "mtface/landmark.hpp"

namespace mtface {

struct ModelConfig {
  LandmarkConfig landmark;
  BackboneConfig backbone;
  AUConfig au;
  EmotionConfig emotion;
  int left_eye = 36;
  int right_eye = 45;

  void validate() const;
  int unified_dim() const { return mtface::unified_dim(landmark, backbone); }
};

// Parameter prefixes of the separately frozen blocks.
inline constexpr const char* kLandmarkBlock = "landmark.";
inline constexpr const char* kBackboneBlock = "backbone.";
inline constexpr std::array<const char*, 4> kHeadBlocks{"au.", "gaze.", "emotion.", "multitask."};
inline constexpr const char* kLogVarName = "multitask.log_var";

struct ModelOutputs {
  std::vector<LandmarkSet> landmarks;  // crop pixels
  std::vector<std::vector<double>> au_probs;
  std::vector<GazeAngles> gaze;
  std::vector<std::vector<double>> emotion_logits;
};

// All parameters of the multitask network in one ParamSet. Not copyable:
// the sub-modules hold references into the set.
class Model {
 public:
  explicit Model(const ModelConfig& cfg);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  HourglassNet& landmark() { return landmark_; }
  Backbone& backbone() { return backbone_; }
  AUHead& au() { return au_; }
  GazeHead& gaze() { return gaze_; }
  EmotionHead& emotion() { return emotion_; }
  Param& log_var() { return *log_var_; }

  void init(uint64_t seed);

  // faces {3, B, S, S}; no gradient bookkeeping
  std::vector<LandmarkSet> predict_landmarks(const Tensor& faces);
  // {B, 2N} landmark block of the unified representation
  Tensor landmark_block(const std::vector<LandmarkSet>& landmarks) const;
  ModelOutputs predict(const Tensor& faces);

  static int64_t parameter_count(const ModelConfig& cfg);

 private:
  ModelConfig cfg_;
  ParamSet params_;
  HourglassNet landmark_;
  Backbone backbone_;
  AUHead au_;
  GazeHead gaze_;
  EmotionHead emotion_;
  Param* log_var_;
};

// Stacks single {3, S, S} faces into a {3, B, S, S} batch.
Tensor batch_faces(const std::vector<const Tensor*>& faces);

}  // namespace mtface
