#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "mtface/dataset.hpp"
#include "mtface/model.hpp"

namespace mtface {

enum class Task { AU = 0, Gaze = 1, Emotion = 2 };
inline constexpr std::array<const char*, 3> kTaskNames{"au", "gaze", "emotion"};

// s_task = log sigma^2_task, stored in the "multitask.log_var" parameter.
struct UncertaintyParams {
  std::array<double, 3> s{};
};

struct CombinedLoss {
  double value = 0.0;
  std::array<double, 3> d_loss{};  // dL/dL_task
  std::array<double, 3> d_s{};     // dL/ds_task
};

// sum_task 0.5 * exp(-s_task) * L_task + s_task
CombinedLoss combined_loss(const std::array<double, 3>& task_losses, const UncertaintyParams& unc);

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 5e-4;
  double eps = 1e-8;
};

// Decoupled weight decay, then the bias-corrected adaptive step:
//   theta -= lr * wd * theta
//   m = b1 m + (1 - b1) g;  v = b2 v + (1 - b2) g^2
//   theta -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
// Arithmetic is double; parameters are stored back as float32.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}
  void step(ParamSet& params);
  int64_t steps() const { return t_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamWConfig cfg_;
  int64_t t_ = 0;
  std::map<std::string, Moments> state_;
};

// One batch of sample indices per task for one optimizer step.
using TaskBatch = std::vector<std::vector<size_t>>;

// Deterministic schedule for one epoch. Steps = max over tasks of
// ceil(size / batch); a task with fewer batches cycles through fresh
// permutations seeded by (seed, task, epoch, cycle).
std::vector<TaskBatch> round_robin_batches(const std::vector<size_t>& sizes,
                                           const std::vector<size_t>& batch_sizes, uint64_t seed,
                                           int epoch = 0);

struct TrainConfig {
  int stage = 1;
  double lr = 1e-3;
  int epochs = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 5e-4;
  size_t batch_landmark = 8;
  size_t batch_au = 8;
  size_t batch_gaze = 8;
  size_t batch_emotion = 8;
  uint64_t seed = 0;
  // Multiplies each task loss before uncertainty weighting (1 = unscaled).
  std::array<double, 3> loss_scale{1.0, 1.0, 1.0};
  int max_steps = 0;  // 0 means no cap
  Distance star_distance = Distance::SmoothL1;

  static TrainConfig defaults_for_stage(int stage);
  void validate() const;
};

struct TrainData {
  std::vector<Tensor> landmark_faces;
  std::vector<LandmarkSet> landmark_targets;  // crop pixels
  std::vector<Tensor> au_faces;
  std::vector<std::vector<int>> au_labels;
  std::vector<Tensor> gaze_faces;
  std::vector<GazeAngles> gaze_labels;
  std::vector<Tensor> emotion_faces;
  std::vector<int> emotion_labels;

  static TrainData load(const std::string& landmark_manifest, const std::string& au_manifest,
                        const std::string& gaze_manifest, const std::string& emotion_manifest,
                        int input_size);
};

struct EpochRecord {
  int stage = 0;
  int epoch = 0;
  int steps = 0;
  std::map<std::string, double> losses;  // mean per task over the epoch
  UncertaintyParams uncertainty;
  std::map<std::string, std::string> fingerprints;
};

struct StageReport {
  int stage = 0;
  std::vector<EpochRecord> epochs;
  std::vector<double> step_losses;  // optimized objective per step, pre-update
  UncertaintyParams final_uncertainty;
  std::map<std::string, std::string> fingerprints_before;
  std::map<std::string, std::string> fingerprints_after;

  std::string to_json_lines() const;
};

std::map<std::string, std::string> block_fingerprints(const ParamSet& params);

// Integrity error when any listed block has a different fingerprint.
void verify_frozen(const std::map<std::string, std::string>& before,
                   const std::map<std::string, std::string>& after, const std::vector<std::string>& blocks);

// Completed-stage markers persisted with the checkpoint.
struct StageState {
  std::array<uint64_t, 3> fingerprints{};  // zero means the stage has not run
  bool completed(int stage) const { return fingerprints.at(static_cast<size_t>(stage - 1)) != 0; }
};

UncertaintyParams read_uncertainty(const Model& model);

// Runs one training stage in place. Throws StageOrder when the previous
// stage is missing, TrainingAbort on a non-finite loss and Integrity when a
// frozen block changes.
StageReport run_stage(Model& model, StageState& state, const TrainData& data, const TrainConfig& cfg);

// Metrics on a dataset (crop-frame inputs).
double evaluate_nme(Model& model, const std::vector<Tensor>& faces,
                    const std::vector<LandmarkSet>& targets);
double evaluate_au_f1(Model& model, const std::vector<Tensor>& faces,
                      const std::vector<std::vector<int>>& labels);
double evaluate_gaze_error(Model& model, const std::vector<Tensor>& faces,
                           const std::vector<GazeAngles>& labels);
double evaluate_accuracy(Model& model, const std::vector<Tensor>& faces, const std::vector<int>& labels);

}  // namespace mtface
