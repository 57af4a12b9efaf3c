#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mtface/checkpoint.hpp"
#include "mtface/image.hpp"
#include "mtface/model.hpp"

namespace mtface {

// Source-image pixels; (x, y) is the top-left corner.
struct FaceBox {
  double x = 0.0, y = 0.0, w = 0.0, h = 0.0;
  double confidence = 1.0;
};

// Whole-image box with confidence 1.
FaceBox full_frame_box(const Image& image);

// Precomputed boxes from a JSON sidecar: {"<frame path>": [{"x","y","w","h","confidence"}, ...]}.
class DetectionSidecar {
 public:
  static DetectionSidecar load(const std::string& path);
  static DetectionSidecar parse(const std::string& json_text);
  // Exact key first, then the file name alone. nullopt when the frame is absent.
  std::optional<std::vector<FaceBox>> lookup(const std::string& frame_path) const;

 private:
  std::map<std::string, std::vector<FaceBox>> boxes_;
};

// Maps between crop pixel indices and source pixel indices (pixel centres
// at integer coordinates): src = origin + (crop + 0.5) * scale - 0.5.
struct CropTransform {
  double x0 = 0.0, y0 = 0.0;  // region top-left edge in source pixels
  double sx = 1.0, sy = 1.0;  // source pixels per crop pixel
  Vec2 to_source(const Vec2& crop) const;
  Vec2 to_crop(const Vec2& source) const;
};

struct AlignedFace {
  Tensor pixels;  // {3, size, size} in [0, 1]
  CropTransform transform;
};

// The box is grown to a square of side max(w, h) * 1.2 about its centre,
// intersected with the image and bilinearly resampled to size x size.
// Throws DegenerateInput for an empty box or one outside the image.
AlignedFace align_crop(const Image& image, const FaceBox& box, int size);

// Bilinear sample with edge clamping; channel c of pixel-index point (x, y).
double bilinear_sample(const Image& image, double x, double y, int c);

struct FrameResult {
  int frame = 0;
  int face_id = 0;
  std::string path;
  FaceBox box;
  bool success = false;
  std::string error;                  // set when success is false
  LandmarkSet landmarks;              // source-image pixels
  std::vector<double> au_probs;
  GazeAngles gaze;
  std::vector<double> emotion_probs;  // sums to 1
  int emotion_label = 0;
};

// Model fields for a batch of aligned faces; frame, id and box are left to the caller.
std::vector<FrameResult> run_inference(Model& model, const std::vector<AlignedFace>& faces);

enum class Detector { FullFrame, Sidecar };

struct InferenceOptions {
  Detector detector = Detector::FullFrame;
  const DetectionSidecar* sidecar = nullptr;
};

// Detect, align and infer one frame. Unreadable images, missing sidecar
// entries and degenerate boxes become success = false rows.
std::vector<FrameResult> process_frame(Model& model, const std::string& path, int frame,
                                       const InferenceOptions& opts);

// Image files of a directory in lexicographic order, or the file itself.
std::vector<std::string> list_frames(const std::string& input);

std::vector<std::string> csv_header(const ModelConfig& cfg);
std::string format_csv(const std::vector<FrameResult>& results, const ModelConfig& cfg);
std::string format_json(const std::vector<FrameResult>& results, const ModelConfig& cfg);
enum class OutputFormat { Csv, Json };
void write_results(const std::vector<FrameResult>& results, const ModelConfig& cfg, const std::string& path,
                   OutputFormat format);

struct OverlayColors {
  std::array<uint8_t, 3> landmark{0, 255, 0};
  std::array<uint8_t, 3> box{255, 0, 0};
  std::array<uint8_t, 3> gaze{0, 128, 255};
};

// Landmark dots (3x3), the face box and one gaze ray per eye starting at the
// eye landmark centroid with length 0.4 * box width. Failed results are skipped.
Image render_overlay(const Image& image, const std::vector<FrameResult>& results, const ModelConfig& cfg,
                     const OverlayColors& colors = {});

// Landmark indices of the image-left and image-right eye regions.
std::pair<std::vector<size_t>, std::vector<size_t>> eye_regions(const ModelConfig& cfg);

}  // namespace mtface
