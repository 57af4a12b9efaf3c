#pragma once

#include <vector>

#include "mtface/autograd.hpp"
#include "mtface/landmark.hpp"
#include "mtface/params.hpp"

namespace mtface {

struct BackboneConfig {
  int features = 256;  // F, channel count of the last block
  int blocks = 4;      // stride-2 conv blocks; channels double up to F

  void validate() const;
  std::vector<int> channels() const;
};

// Bias-free stride-2 conv stack with global average pooling. Parameters live
// under "backbone.".
class Backbone {
 public:
  Backbone(ParamSet& params, const BackboneConfig& cfg);

  const BackboneConfig& config() const { return cfg_; }
  void init(Rng& rng);

  // image {3, B, S, S} -> {B, F}
  Tape::Var forward(Tape& tape, Tape::Var image);

  static int64_t parameter_count(const BackboneConfig& cfg);

 private:
  ParamSet& params_;
  BackboneConfig cfg_;
  std::vector<Param*> convs_;
};

using ContextFeatures = std::vector<float>;
using UnifiedRepresentation = std::vector<float>;

// Single-image convenience wrapper. face is {3, S, S}.
ContextFeatures extract_context(const Tensor& face, Backbone& backbone);

// Layout: [x0/S, y0/S, ..., x_{N-1}/S, y_{N-1}/S, ctx...]
UnifiedRepresentation fuse(const LandmarkSet& landmarks, const ContextFeatures& ctx,
                           const LandmarkConfig& lcfg, const BackboneConfig& bcfg);

int unified_dim(const LandmarkConfig& lcfg, const BackboneConfig& bcfg);

}  // namespace mtface
