#include "mtface/model.hpp"

#include <algorithm>

#include "mtface/error.hpp"

namespace mtface {

void ModelConfig::validate() const {
  landmark.validate();
  backbone.validate();
  au.validate();
  emotion.validate();
  require(left_eye >= 0 && left_eye < landmark.num_landmarks && right_eye >= 0 &&
              right_eye < landmark.num_landmarks && left_eye != right_eye,
          ErrorKind::Configuration, "eye corner indices must be distinct valid landmarks");
  require(landmark.input_size >> backbone.blocks >= 1, ErrorKind::Configuration,
          "input_size too small for the backbone block count");
}

Model::Model(const ModelConfig& cfg)
    : cfg_(cfg),
      landmark_(params_, cfg.landmark),
      backbone_(params_, cfg.backbone),
      au_(params_, cfg.au, cfg.unified_dim()),
      gaze_(params_, cfg.unified_dim()),
      emotion_(params_, cfg.emotion, cfg.unified_dim()),
      log_var_(&params_.add(kLogVarName, {3})) {
  cfg_.validate();
}

int64_t Model::parameter_count(const ModelConfig& cfg) {
  Model m(cfg);
  return m.params().count();
}

void Model::init(uint64_t seed) {
  Rng lm(mix_seed(seed, 1)), bb(mix_seed(seed, 2)), au(mix_seed(seed, 3)), gz(mix_seed(seed, 4)),
      em(mix_seed(seed, 5));
  landmark_.init(lm);
  backbone_.init(bb);
  au_.init(au);
  gaze_.init(gz);
  emotion_.init(em);
  log_var_->value.zero();
}

Tensor batch_faces(const std::vector<const Tensor*>& faces) {
  require(!faces.empty(), ErrorKind::InvalidInput, "batch_faces: empty batch");
  const Tensor& first = *faces.front();
  require(first.rank() == 3 && first.dim(0) == 3, ErrorKind::InvalidInput,
          "faces must be {3,S,S}, got " + shape_str(first.shape));
  const int64_t b = static_cast<int64_t>(faces.size()), hw = first.dim(1) * first.dim(2);
  Tensor out({3, b, first.dim(1), first.dim(2)});
  for (int64_t i = 0; i < b; ++i) {
    const Tensor& f = *faces[static_cast<size_t>(i)];
    require(f.shape == first.shape, ErrorKind::InvalidInput, "batch_faces: mixed face sizes");
    for (int64_t c = 0; c < 3; ++c)
      std::copy_n(f.ptr() + c * hw, hw, out.ptr() + (c * b + i) * hw);
  }
  return out;
}

std::vector<LandmarkSet> Model::predict_landmarks(const Tensor& faces) {
  Tape tape;
  auto stacks = landmark_.forward(tape, tape.constant(faces));
  const Tensor& last = tape.value(stacks.back());
  std::vector<LandmarkSet> out;
  for (int64_t b = 0; b < last.dim(1); ++b)
    out.push_back(decode_landmarks(stack_from_tensor(last, b), cfg_.landmark));
  return out;
}

Tensor Model::landmark_block(const std::vector<LandmarkSet>& landmarks) const {
  const int64_t n = cfg_.landmark.num_landmarks;
  Tensor out({static_cast<int64_t>(landmarks.size()), 2 * n});
  const double s = cfg_.landmark.input_size;
  for (size_t b = 0; b < landmarks.size(); ++b) {
    require(static_cast<int64_t>(landmarks[b].size()) == n, ErrorKind::InvalidInput,
            "landmark_block: landmark count mismatch");
    for (int64_t i = 0; i < n; ++i) {
      out.data[b * 2 * n + 2 * i] = static_cast<float>(landmarks[b].coords[i][0] / s);
      out.data[b * 2 * n + 2 * i + 1] = static_cast<float>(landmarks[b].coords[i][1] / s);
    }
  }
  return out;
}

ModelOutputs Model::predict(const Tensor& faces) {
  ModelOutputs out;
  out.landmarks = predict_landmarks(faces);
  Tape tape;
  auto ctx = backbone_.forward(tape, tape.constant(faces));
  auto u = tape.concat_cols(tape.constant(landmark_block(out.landmarks)), ctx);
  const Tensor& au_logits = tape.value(au_.forward(tape, u));
  const auto gaze = gaze_.forward(tape, u);
  const Tensor& emo = tape.value(emotion_.forward(tape, u));
  const int64_t b = au_logits.dim(0);
  for (int64_t s = 0; s < b; ++s) {
    std::vector<double> p(static_cast<size_t>(au_logits.dim(1)));
    for (size_t i = 0; i < p.size(); ++i) p[i] = sigmoid(au_logits.data[s * au_logits.dim(1) + i]);
    out.au_probs.push_back(std::move(p));
    std::array<double, 4> g{};
    for (size_t k = 0; k < 4; ++k) g[k] = tape.value(gaze[k]).data[static_cast<size_t>(s)];
    out.gaze.push_back(GazeAngles::from_array(g));
    out.emotion_logits.emplace_back(emo.ptr() + s * emo.dim(1), emo.ptr() + (s + 1) * emo.dim(1));
  }
  return out;
}

}  // namespace mtface
