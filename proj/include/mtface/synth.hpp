#pragma once

#include <set>
#include <string>
#include <vector>

#include "mtface/landmark.hpp"

namespace mtface {

struct SynthSpec {
  int n = 32;
  std::set<std::string> tasks{"landmark", "au", "gaze", "emotion"};
  int image_size = 64;
  uint64_t seed = 7;
  int num_landmarks = 68;
  int num_aus = 12;
  int num_classes = 8;
};

// Mean face layout in unit face coordinates (x right, y down, half-width 1).
std::vector<Vec2> landmark_template(int num_landmarks);

struct SynthManifests {
  std::string landmark, au, gaze, emotion;  // empty when the task was not requested
};

// Writes images/NNNN.ppm plus one manifest per requested task. Labels drive
// the rendering (landmark dots, AU markers, pupil offsets, background hue),
// so the corpus is learnable as well as reproducible.
SynthManifests generate_synthetic_dataset(const SynthSpec& spec, const std::string& out_dir);

}  // namespace mtface
