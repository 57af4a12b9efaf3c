#include "mtface/fusion.hpp"

#include <cmath>
#include <string>

#include "mtface/error.hpp"

namespace mtface {

void BackboneConfig::validate() const {
  require(blocks >= 1, ErrorKind::Configuration, "backbone.blocks must be at least 1");
  require(features >= 1 && features % (1 << (blocks - 1)) == 0, ErrorKind::Configuration,
          "backbone.features must be divisible by 2^(blocks-1)");
}

std::vector<int> BackboneConfig::channels() const {
  std::vector<int> out;
  for (int i = 0; i < blocks; ++i) out.push_back(features >> (blocks - 1 - i));
  return out;
}

Backbone::Backbone(ParamSet& params, const BackboneConfig& cfg) : params_(params), cfg_(cfg) {
  cfg_.validate();
  int cin = 3;
  const auto chans = cfg_.channels();
  for (size_t i = 0; i < chans.size(); ++i) {
    convs_.push_back(&params_.add("backbone.block" + std::to_string(i) + ".weight",
                                  {chans[i], cin, 3, 3}));
    cin = chans[i];
  }
}

int64_t Backbone::parameter_count(const BackboneConfig& cfg) {
  ParamSet scratch;
  Backbone b(scratch, cfg);
  return scratch.count("backbone.");
}

void Backbone::init(Rng& rng) {
  for (Param* p : convs_) {
    const double fan_in = static_cast<double>(p->value.dim(1) * 9);
    fill_normal(p->value, rng, std::sqrt(2.0 / fan_in));
  }
}

Tape::Var Backbone::forward(Tape& tape, Tape::Var image) {
  const Tensor& img = tape.value(image);
  require(img.rank() == 4 && img.dim(0) == 3, ErrorKind::Configuration,
          "backbone input must be {3,B,S,S}, got " + shape_str(img.shape));
  require(img.dim(2) >> cfg_.blocks >= 1 && img.dim(3) >> cfg_.blocks >= 1,
          ErrorKind::Configuration, "backbone input too small for its block count");
  auto x = image;
  for (Param* p : convs_) x = tape.relu(tape.conv2d(x, tape.param(*p), {}, 2, 1));
  return tape.global_avg_pool(x);
}

ContextFeatures extract_context(const Tensor& face, Backbone& backbone) {
  require(face.rank() == 3 && face.dim(0) == 3, ErrorKind::Configuration,
          "face must be {3,S,S}, got " + shape_str(face.shape));
  Tensor img = face;
  img.reshape({3, 1, face.dim(1), face.dim(2)});
  Tape tape;
  auto out = backbone.forward(tape, tape.constant(std::move(img)));
  return tape.value(out).data;
}

int unified_dim(const LandmarkConfig& lcfg, const BackboneConfig& bcfg) {
  return 2 * lcfg.num_landmarks + bcfg.features;
}

UnifiedRepresentation fuse(const LandmarkSet& landmarks, const ContextFeatures& ctx,
                           const LandmarkConfig& lcfg, const BackboneConfig& bcfg) {
  require(static_cast<int>(landmarks.size()) == lcfg.num_landmarks, ErrorKind::InvalidInput,
          "fuse: landmark count does not match config");
  require(static_cast<int>(ctx.size()) == bcfg.features, ErrorKind::InvalidInput,
          "fuse: context dimension does not match config");
  UnifiedRepresentation u;
  u.reserve(static_cast<size_t>(unified_dim(lcfg, bcfg)));
  const double s = lcfg.input_size;
  for (const Vec2& c : landmarks.coords) {
    u.push_back(static_cast<float>(c[0] / s));
    u.push_back(static_cast<float>(c[1] / s));
  }
  u.insert(u.end(), ctx.begin(), ctx.end());
  return u;
}

}  // namespace mtface
