#include "mtface/multitask.hpp"

#include <algorithm>
#include <cmath>
#include "json.hpp"

#include "mtface/error.hpp"

namespace mtface {

CombinedLoss combined_loss(const std::array<double, 3>& task_losses, const UncertaintyParams& unc) {
  CombinedLoss out;
  for (size_t t = 0; t < 3; ++t) {
    const double l = task_losses[t];
    if (!std::isfinite(l) || !std::isfinite(unc.s[t]))
      throw TrainingAbort(kTaskNames[t], std::string("non-finite ") + kTaskNames[t] + " loss");
    require(l >= 0.0, ErrorKind::InvalidInput, std::string("negative ") + kTaskNames[t] + " loss");
    const double precision = std::exp(-unc.s[t]);
    out.value += 0.5 * precision * l + unc.s[t];
    out.d_loss[t] = 0.5 * precision;
    out.d_s[t] = -0.5 * precision * l + 1.0;
  }
  return out;
}

void AdamW::step(ParamSet& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Param& p : params) {
    if (!p.trainable) continue;
    Moments& st = state_[p.name];
    const size_t n = p.value.data.size();
    if (st.m.size() != n) {
      st.m.assign(n, 0.0);
      st.v.assign(n, 0.0);
    }
    for (size_t i = 0; i < n; ++i) {
      const double g = p.grad.data[i];
      double theta = p.value.data[i];
      theta -= cfg_.lr * cfg_.weight_decay * theta;
      st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * g;
      st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * g * g;
      theta -= cfg_.lr * (st.m[i] / bc1) / (std::sqrt(st.v[i] / bc2) + cfg_.eps);
      p.value.data[i] = static_cast<float>(theta);
    }
  }
}

std::vector<TaskBatch> round_robin_batches(const std::vector<size_t>& sizes,
                                           const std::vector<size_t>& batch_sizes, uint64_t seed,
                                           int epoch) {
  require(!sizes.empty() && sizes.size() == batch_sizes.size(), ErrorKind::InvalidInput,
          "round_robin_batches: one batch size per task required");
  size_t steps = 0;
  for (size_t t = 0; t < sizes.size(); ++t) {
    require(sizes[t] > 0, ErrorKind::InvalidInput,
            "round_robin_batches: dataset " + std::to_string(t) + " is empty");
    require(batch_sizes[t] > 0, ErrorKind::InvalidInput, "round_robin_batches: zero batch size");
    steps = std::max(steps, (sizes[t] + batch_sizes[t] - 1) / batch_sizes[t]);
  }
  std::vector<TaskBatch> schedule(steps, TaskBatch(sizes.size()));
  for (size_t t = 0; t < sizes.size(); ++t) {
    const size_t per_cycle = (sizes[t] + batch_sizes[t] - 1) / batch_sizes[t];
    std::vector<size_t> order;
    for (size_t step = 0; step < steps; ++step) {
      const size_t within = step % per_cycle;
      if (within == 0) {
        Rng rng(mix_seed(mix_seed(seed, t + 1), static_cast<uint64_t>(epoch), step / per_cycle));
        order = permutation(sizes[t], rng);
      }
      const size_t begin = within * batch_sizes[t];
      const size_t end = std::min(begin + batch_sizes[t], sizes[t]);
      schedule[step][t].assign(order.begin() + static_cast<std::ptrdiff_t>(begin),
                               order.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  return schedule;
}

TrainConfig TrainConfig::defaults_for_stage(int stage) {
  TrainConfig c;
  c.stage = stage;
  switch (stage) {
    case 1: c.lr = 1e-3; c.epochs = 100; break;
    case 2: c.lr = 1e-3; c.epochs = 5; break;
    case 3: c.lr = 1e-4; c.epochs = 15; break;
    default: fail(ErrorKind::Configuration, "stage must be 1, 2 or 3");
  }
  return c;
}

void TrainConfig::validate() const {
  require(stage >= 1 && stage <= 3, ErrorKind::Configuration, "stage must be 1, 2 or 3");
  require(lr > 0.0, ErrorKind::Configuration, "lr must be positive");
  require(epochs >= 1, ErrorKind::Configuration, "epochs must be at least 1");
  require(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0, ErrorKind::Configuration,
          "beta1 and beta2 must lie in (0,1)");
  require(weight_decay >= 0.0, ErrorKind::Configuration, "weight_decay must be non-negative");
  require(batch_landmark > 0 && batch_au > 0 && batch_gaze > 0 && batch_emotion > 0,
          ErrorKind::Configuration, "batch sizes must be positive");
}

TrainData TrainData::load(const std::string& landmark_manifest, const std::string& au_manifest,
                          const std::string& gaze_manifest, const std::string& emotion_manifest,
                          int input_size) {
  TrainData d;
  if (!landmark_manifest.empty())
    for (auto& s : load_landmark_manifest(landmark_manifest)) {
      d.landmark_faces.push_back(load_face(s.path, input_size));
      d.landmark_targets.push_back(std::move(s.landmarks));
    }
  if (!au_manifest.empty())
    for (auto& s : load_au_manifest(au_manifest)) {
      d.au_faces.push_back(load_face(s.path, input_size));
      d.au_labels.push_back(std::move(s.labels));
    }
  if (!gaze_manifest.empty())
    for (auto& s : load_gaze_manifest(gaze_manifest)) {
      d.gaze_faces.push_back(load_face(s.path, input_size));
      d.gaze_labels.push_back(s.gaze);
    }
  if (!emotion_manifest.empty())
    for (auto& s : load_emotion_manifest(emotion_manifest)) {
      d.emotion_faces.push_back(load_face(s.path, input_size));
      d.emotion_labels.push_back(s.label);
    }
  return d;
}

std::string StageReport::to_json_lines() const {
  std::string out;
  for (const EpochRecord& e : epochs) {
    nlohmann::ordered_json j;
    j["stage"] = e.stage;
    j["epoch"] = e.epoch;
    j["steps"] = e.steps;
    j["losses"] = e.losses;
    j["uncertainty"] = {{"s_au", e.uncertainty.s[0]},
                        {"s_gaze", e.uncertainty.s[1]},
                        {"s_emotion", e.uncertainty.s[2]}};
    j["fingerprints_before"] = fingerprints_before;
    j["fingerprints"] = e.fingerprints;
    out += j.dump() + "\n";
  }
  return out;
}

std::map<std::string, std::string> block_fingerprints(const ParamSet& params) {
  std::map<std::string, std::string> out;
  out["landmark"] = fingerprint_hex(fingerprint(params, kLandmarkBlock));
  out["backbone"] = fingerprint_hex(fingerprint(params, kBackboneBlock));
  for (const char* head : kHeadBlocks) {
    std::string name(head);
    name.pop_back();
    out[name] = fingerprint_hex(fingerprint(params, head));
  }
  return out;
}

UncertaintyParams read_uncertainty(const Model& model) {
  const Tensor& s = model.params().at(kLogVarName).value;
  return {{s.data[0], s.data[1], s.data[2]}};
}

namespace {

constexpr size_t kEvalChunk = 32;

std::vector<const Tensor*> gather(const std::vector<Tensor>& faces, const std::vector<size_t>& idx) {
  std::vector<const Tensor*> out;
  out.reserve(idx.size());
  for (size_t i : idx) out.push_back(&faces.at(i));
  return out;
}

std::vector<size_t> iota(size_t begin, size_t end) {
  std::vector<size_t> v;
  for (size_t i = begin; i < end; ++i) v.push_back(i);
  return v;
}

// Landmark blocks (and optionally context features) of every sample under
// the frozen landmark module.
Tensor cache_rows(Model& model, const std::vector<Tensor>& faces, bool with_context) {
  const int64_t lw = 2 * model.config().landmark.num_landmarks;
  const int64_t width = with_context ? model.config().unified_dim() : lw;
  Tensor out({static_cast<int64_t>(faces.size()), width});
  for (size_t begin = 0; begin < faces.size(); begin += kEvalChunk) {
    const auto idx = iota(begin, std::min(faces.size(), begin + kEvalChunk));
    const Tensor batch = batch_faces(gather(faces, idx));
    const Tensor lm = model.landmark_block(model.predict_landmarks(batch));
    Tensor ctx;
    if (with_context) {
      Tape tape;
      ctx = tape.value(model.backbone().forward(tape, tape.constant(batch)));
    }
    for (size_t r = 0; r < idx.size(); ++r) {
      float* dst = out.ptr() + static_cast<int64_t>(idx[r]) * width;
      std::copy_n(lm.ptr() + static_cast<int64_t>(r) * lw, lw, dst);
      if (with_context)
        std::copy_n(ctx.ptr() + static_cast<int64_t>(r) * (width - lw), width - lw, dst + lw);
    }
  }
  return out;
}

Tensor take_rows(const Tensor& rows, const std::vector<size_t>& idx) {
  const int64_t w = rows.dim(1);
  Tensor out({static_cast<int64_t>(idx.size()), w});
  for (size_t r = 0; r < idx.size(); ++r)
    std::copy_n(rows.ptr() + static_cast<int64_t>(idx[r]) * w, w, out.ptr() + static_cast<int64_t>(r) * w);
  return out;
}

void check_finite(double v, const char* task) {
  if (!std::isfinite(v)) throw TrainingAbort(task, std::string("non-finite ") + task + " loss");
}

void configure_trainable(ParamSet& params, int stage) {
  params.set_trainable("", stage != 1);
  params.set_trainable(kLandmarkBlock, stage == 1);
  params.set_trainable(kBackboneBlock, stage == 3);
}

struct HeadInputs {
  Tensor au_rows, gaze_rows, emotion_rows;  // landmark block or full u per sample
};

double run_landmark_step(Model& model, const TrainData& data, const std::vector<size_t>& idx,
                         const TrainConfig& cfg) {
  const LandmarkConfig& lc = model.config().landmark;
  const double inv_scale = 1.0 / lc.scale();
  Tape tape;
  const auto stacks = model.landmark().forward(tape, tape.constant(batch_faces(gather(data.landmark_faces, idx))));
  std::vector<LandmarkSet> targets;
  for (size_t i : idx) {
    LandmarkSet t = data.landmark_targets[i];
    require(static_cast<int>(t.size()) == lc.num_landmarks, ErrorKind::Data,
            "landmark sample has " + std::to_string(t.size()) + " points, model expects " +
                std::to_string(lc.num_landmarks));
    for (Vec2& c : t.coords) c = {c[0] * inv_scale, c[1] * inv_scale};
    targets.push_back(std::move(t));
  }
  std::vector<const Tensor*> outs;
  for (auto v : stacks) outs.push_back(&tape.value(v));
  std::vector<Tensor> grads;
  const double loss = star_loss_batch(outs, targets, cfg.star_distance, &grads);
  check_finite(loss, "landmark");
  for (size_t s = 0; s < stacks.size(); ++s) tape.grad(stacks[s]) = std::move(grads[s]);
  tape.backward();
  return loss;
}

struct HeadStep {
  std::array<double, 3> raw{};  // unscaled task losses
  double combined = 0.0;
};

HeadStep run_head_step(Model& model, const TrainData& data, const HeadInputs& inputs, const TaskBatch& batch,
                       const TrainConfig& cfg, const std::vector<double>& au_weights,
                       const std::vector<double>& emo_weights) {
  const bool stage3 = cfg.stage == 3;
  Tape tape;
  auto unified = [&](const Tensor& rows, const std::vector<Tensor>& faces, const std::vector<size_t>& idx) {
    Tensor picked = take_rows(rows, idx);
    if (!stage3) return tape.constant(std::move(picked));
    auto ctx = model.backbone().forward(tape, tape.constant(batch_faces(gather(faces, idx))));
    return tape.concat_cols(tape.constant(std::move(picked)), ctx);
  };

  const auto& au_idx = batch[static_cast<size_t>(Task::AU)];
  const auto& gz_idx = batch[static_cast<size_t>(Task::Gaze)];
  const auto& em_idx = batch[static_cast<size_t>(Task::Emotion)];

  auto au_logits = model.au().forward(tape, unified(inputs.au_rows, data.au_faces, au_idx));
  auto gaze_out = model.gaze().forward(tape, unified(inputs.gaze_rows, data.gaze_faces, gz_idx));
  auto emo_logits = model.emotion().forward(tape, unified(inputs.emotion_rows, data.emotion_faces, em_idx));

  HeadStep out;
  // AU
  std::vector<std::vector<int>> au_labels;
  for (size_t i : au_idx) au_labels.push_back(data.au_labels[i]);
  Tensor au_grad;
  out.raw[0] = weighted_asymmetric_loss_logits(tape.value(au_logits), au_labels, au_weights, &au_grad);
  // gaze
  std::array<Tensor, 4> gaze_grad;
  for (auto& g : gaze_grad) g = Tensor({static_cast<int64_t>(gz_idx.size()), 1});
  for (size_t r = 0; r < gz_idx.size(); ++r) {
    std::array<double, 4> pred{};
    for (size_t k = 0; k < 4; ++k) pred[k] = tape.value(gaze_out[k]).data[r];
    std::array<double, 4> g{};
    out.raw[1] += gaze_mse_loss(GazeAngles::from_array(pred), data.gaze_labels[gz_idx[r]], &g).value;
    for (size_t k = 0; k < 4; ++k) gaze_grad[k].data[r] = static_cast<float>(g[k] / gz_idx.size());
  }
  out.raw[1] /= static_cast<double>(gz_idx.size());
  // emotion
  const Tensor& el = tape.value(emo_logits);
  std::vector<std::vector<double>> logits;
  std::vector<int> labels;
  for (size_t r = 0; r < em_idx.size(); ++r) {
    logits.emplace_back(el.ptr() + static_cast<int64_t>(r) * el.dim(1),
                        el.ptr() + static_cast<int64_t>(r + 1) * el.dim(1));
    labels.push_back(data.emotion_labels[em_idx[r]]);
  }
  std::vector<std::vector<double>> emo_grad;
  out.raw[2] = weighted_smoothed_ce(logits, labels, emo_weights, model.config().emotion, &emo_grad);

  for (size_t t = 0; t < 3; ++t) check_finite(out.raw[t], kTaskNames[t]);
  std::array<double, 3> scaled{};
  for (size_t t = 0; t < 3; ++t) scaled[t] = cfg.loss_scale[t] * out.raw[t];
  const CombinedLoss combined = combined_loss(scaled, read_uncertainty(model));
  out.combined = combined.value;

  // chain dL/dL_task into each head output
  const double k_au = combined.d_loss[0] * cfg.loss_scale[0];
  const double k_gz = combined.d_loss[1] * cfg.loss_scale[1];
  const double k_em = combined.d_loss[2] * cfg.loss_scale[2];
  Tensor& gau = tape.grad(au_logits);
  for (size_t i = 0; i < gau.data.size(); ++i) gau.data[i] = static_cast<float>(k_au * au_grad.data[i]);
  for (size_t k = 0; k < 4; ++k) {
    Tensor& g = tape.grad(gaze_out[k]);
    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] = static_cast<float>(k_gz * gaze_grad[k].data[i]);
  }
  Tensor& gem = tape.grad(emo_logits);
  const int64_t c = el.dim(1);
  for (size_t r = 0; r < emo_grad.size(); ++r)
    for (int64_t j = 0; j < c; ++j)
      gem.data[static_cast<int64_t>(r) * c + j] = static_cast<float>(k_em * emo_grad[r][static_cast<size_t>(j)]);
  Param& lv = model.log_var();
  if (lv.trainable)
    for (size_t t = 0; t < 3; ++t) lv.grad.data[t] += static_cast<float>(combined.d_s[t]);
  tape.backward();
  return out;
}

}  // namespace

void verify_frozen(const std::map<std::string, std::string>& before,
                   const std::map<std::string, std::string>& after, const std::vector<std::string>& blocks) {
  for (const auto& b : blocks)
    require(before.at(b) == after.at(b), ErrorKind::Integrity,
            "frozen block '" + b + "' changed during training");
}

StageReport run_stage(Model& model, StageState& state, const TrainData& data, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.stage > 1)
    require(state.completed(cfg.stage - 1), ErrorKind::StageOrder,
            "stage " + std::to_string(cfg.stage) + " requires a completed stage " +
                std::to_string(cfg.stage - 1));

  ParamSet& params = model.params();
  configure_trainable(params, cfg.stage);
  params.zero_grad();

  StageReport report;
  report.stage = cfg.stage;
  report.fingerprints_before = block_fingerprints(params);

  AdamW opt({cfg.lr, cfg.beta1, cfg.beta2, cfg.weight_decay, 1e-8});
  int total_steps = 0;
  auto capped = [&] { return cfg.max_steps > 0 && total_steps >= cfg.max_steps; };

  if (cfg.stage == 1) {
    require(!data.landmark_faces.empty(), ErrorKind::Data, "stage 1 needs a landmark dataset");
    for (int epoch = 0; epoch < cfg.epochs && !capped(); ++epoch) {
      const auto schedule =
          round_robin_batches({data.landmark_faces.size()}, {cfg.batch_landmark}, cfg.seed, epoch);
      EpochRecord rec{1, epoch, 0, {}, {}, {}};
      double sum = 0.0;
      for (const TaskBatch& b : schedule) {
        if (capped()) break;
        const double loss = run_landmark_step(model, data, b[0], cfg);
        opt.step(params);
        params.zero_grad();
        report.step_losses.push_back(loss);
        sum += loss;
        ++rec.steps;
        ++total_steps;
      }
      rec.losses["landmark"] = rec.steps ? sum / rec.steps : 0.0;
      rec.uncertainty = read_uncertainty(model);
      rec.fingerprints = block_fingerprints(params);
      report.epochs.push_back(std::move(rec));
    }
  } else {
    require(!data.au_faces.empty() && !data.gaze_faces.empty() && !data.emotion_faces.empty(),
            ErrorKind::Data, "stages 2 and 3 need AU, gaze and emotion datasets");
    const bool with_ctx = cfg.stage == 2;
    HeadInputs inputs{cache_rows(model, data.au_faces, with_ctx), cache_rows(model, data.gaze_faces, with_ctx),
                      cache_rows(model, data.emotion_faces, with_ctx)};
    const auto au_weights = compute_au_weights(data.au_labels);
    const auto emo_weights = class_weights(data.emotion_labels, model.config().emotion);
    const std::vector<size_t> sizes{data.au_faces.size(), data.gaze_faces.size(), data.emotion_faces.size()};
    const std::vector<size_t> batches{cfg.batch_au, cfg.batch_gaze, cfg.batch_emotion};
    for (int epoch = 0; epoch < cfg.epochs && !capped(); ++epoch) {
      const auto schedule = round_robin_batches(sizes, batches, cfg.seed, epoch);
      EpochRecord rec{cfg.stage, epoch, 0, {}, {}, {}};
      std::array<double, 3> sums{};
      double combined = 0.0;
      for (const TaskBatch& b : schedule) {
        if (capped()) break;
        const HeadStep step = run_head_step(model, data, inputs, b, cfg, au_weights, emo_weights);
        opt.step(params);
        params.zero_grad();
        report.step_losses.push_back(step.combined);
        for (size_t t = 0; t < 3; ++t) sums[t] += step.raw[t];
        combined += step.combined;
        ++rec.steps;
        ++total_steps;
      }
      const double n = rec.steps ? rec.steps : 1;
      for (size_t t = 0; t < 3; ++t) rec.losses[kTaskNames[t]] = sums[t] / n;
      rec.losses["combined"] = combined / n;
      rec.uncertainty = read_uncertainty(model);
      rec.fingerprints = block_fingerprints(params);
      report.epochs.push_back(std::move(rec));
    }
  }

  report.fingerprints_after = block_fingerprints(params);
  report.final_uncertainty = read_uncertainty(model);
  if (cfg.stage == 1) {
    verify_frozen(report.fingerprints_before, report.fingerprints_after,
                  {"backbone", "au", "gaze", "emotion", "multitask"});
  } else {
    verify_frozen(report.fingerprints_before, report.fingerprints_after, {"landmark"});
    if (cfg.stage == 2) verify_frozen(report.fingerprints_before, report.fingerprints_after, {"backbone"});
  }
  state.fingerprints[static_cast<size_t>(cfg.stage - 1)] = fingerprint(params, "") | 1;
  configure_trainable(params, 0);
  return report;
}

double evaluate_nme(Model& model, const std::vector<Tensor>& faces, const std::vector<LandmarkSet>& targets) {
  require(!faces.empty() && faces.size() == targets.size(), ErrorKind::InvalidInput,
          "evaluate_nme: empty or mismatched dataset");
  const auto& cfg = model.config();
  double sum = 0.0;
  for (size_t begin = 0; begin < faces.size(); begin += kEvalChunk) {
    const auto idx = iota(begin, std::min(faces.size(), begin + kEvalChunk));
    const auto pred = model.predict_landmarks(batch_faces(gather(faces, idx)));
    for (size_t r = 0; r < idx.size(); ++r)
      sum += nme_interocular(pred[r], targets[idx[r]], static_cast<size_t>(cfg.left_eye),
                             static_cast<size_t>(cfg.right_eye));
  }
  return sum / static_cast<double>(faces.size());
}

namespace {

template <typename Fn>
void predict_chunks(Model& model, const std::vector<Tensor>& faces, Fn&& fn) {
  for (size_t begin = 0; begin < faces.size(); begin += kEvalChunk) {
    const auto idx = iota(begin, std::min(faces.size(), begin + kEvalChunk));
    const ModelOutputs out = model.predict(batch_faces(gather(faces, idx)));
    for (size_t r = 0; r < idx.size(); ++r) fn(idx[r], out, r);
  }
}

}  // namespace

double evaluate_au_f1(Model& model, const std::vector<Tensor>& faces, const std::vector<std::vector<int>>& labels) {
  require(!faces.empty() && faces.size() == labels.size(), ErrorKind::InvalidInput,
          "evaluate_au_f1: empty or mismatched dataset");
  std::vector<std::vector<double>> probs(faces.size());
  predict_chunks(model, faces, [&](size_t i, const ModelOutputs& o, size_t r) { probs[i] = o.au_probs[r]; });
  return au_f1(probs, labels, model.config().au.presence_threshold).macro;
}

double evaluate_gaze_error(Model& model, const std::vector<Tensor>& faces, const std::vector<GazeAngles>& labels) {
  require(!faces.empty() && faces.size() == labels.size(), ErrorKind::InvalidInput,
          "evaluate_gaze_error: empty or mismatched dataset");
  double sum = 0.0;
  predict_chunks(model, faces, [&](size_t i, const ModelOutputs& o, size_t r) {
    sum += angular_error_deg(o.gaze[r], labels[i]).mean_deg;
  });
  return sum / static_cast<double>(faces.size());
}

double evaluate_accuracy(Model& model, const std::vector<Tensor>& faces, const std::vector<int>& labels) {
  require(!faces.empty() && faces.size() == labels.size(), ErrorKind::InvalidInput,
          "evaluate_accuracy: empty or mismatched dataset");
  std::vector<int> pred(faces.size());
  predict_chunks(model, faces, [&](size_t i, const ModelOutputs& o, size_t r) { pred[i] = argmax(o.emotion_logits[r]); });
  return accuracy(pred, labels);
}

}  // namespace mtface
