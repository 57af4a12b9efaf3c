#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mtface/gaze.hpp"
#include "mtface/landmark.hpp"
#include "mtface/tensor.hpp"

namespace mtface {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::string& path);
double parse_double(const std::string& s, const std::string& context);
int parse_int(const std::string& s, const std::string& context);

struct LandmarkSample {
  std::string path;
  LandmarkSet landmarks;  // crop pixels
};
struct AUSample {
  std::string path;
  std::vector<int> labels;
};
struct GazeSample {
  std::string path;
  GazeAngles gaze;
};
struct EmotionSample {
  std::string path;
  int label = 0;
  std::optional<double> pose_yaw_deg;
};

// Image paths are resolved relative to the manifest's directory.
std::vector<LandmarkSample> load_landmark_manifest(const std::string& path);
std::vector<AUSample> load_au_manifest(const std::string& path);
std::vector<GazeSample> load_gaze_manifest(const std::string& path);
std::vector<EmotionSample> load_emotion_manifest(const std::string& path);

// Reads an aligned face crop and checks it is size x size.
Tensor load_face(const std::string& path, int size);

}  // namespace mtface
