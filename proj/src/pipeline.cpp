#include "mtface/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mtface/error.hpp"

namespace mtface {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

FaceBox full_frame_box(const Image& image) {
  return {0.0, 0.0, static_cast<double>(image.width), static_cast<double>(image.height), 1.0};
}

DetectionSidecar DetectionSidecar::parse(const std::string& json_text) {
  DetectionSidecar s;
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const std::exception& e) {
    fail(ErrorKind::Data, std::string("detections: invalid JSON: ") + e.what());
  }
  require(j.is_object(), ErrorKind::Data, "detections: top level must be an object keyed by frame path");
  for (const auto& [frame, list] : j.items()) {
    require(list.is_array(), ErrorKind::Data, "detections: entry for " + frame + " must be an array");
    std::vector<FaceBox> boxes;
    for (const auto& b : list) {
      try {
        boxes.push_back({b.at("x").get<double>(), b.at("y").get<double>(), b.at("w").get<double>(),
                         b.at("h").get<double>(), b.value("confidence", 1.0)});
      } catch (const std::exception& e) {
        fail(ErrorKind::Data, "detections: bad box for " + frame + ": " + e.what());
      }
    }
    s.boxes_[frame] = std::move(boxes);
  }
  return s;
}

DetectionSidecar DetectionSidecar::load(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot open detections " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::optional<std::vector<FaceBox>> DetectionSidecar::lookup(const std::string& frame_path) const {
  if (auto it = boxes_.find(frame_path); it != boxes_.end()) return it->second;
  if (auto it = boxes_.find(fs::path(frame_path).filename().string()); it != boxes_.end()) return it->second;
  return std::nullopt;
}

Vec2 CropTransform::to_source(const Vec2& c) const {
  return {x0 + (c[0] + 0.5) * sx - 0.5, y0 + (c[1] + 0.5) * sy - 0.5};
}

Vec2 CropTransform::to_crop(const Vec2& s) const {
  return {(s[0] + 0.5 - x0) / sx - 0.5, (s[1] + 0.5 - y0) / sy - 0.5};
}

double bilinear_sample(const Image& image, double x, double y, int c) {
  x = std::clamp(x, 0.0, static_cast<double>(image.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(image.height - 1));
  const int xa = static_cast<int>(std::floor(x)), ya = static_cast<int>(std::floor(y));
  const int xb = std::min(xa + 1, image.width - 1), yb = std::min(ya + 1, image.height - 1);
  const double fx = x - xa, fy = y - ya;
  const double top = (1 - fx) * image.pixel(xa, ya)[c] + fx * image.pixel(xb, ya)[c];
  const double bot = (1 - fx) * image.pixel(xa, yb)[c] + fx * image.pixel(xb, yb)[c];
  return (1 - fy) * top + fy * bot;
}

AlignedFace align_crop(const Image& image, const FaceBox& box, int size) {
  require(size >= 1, ErrorKind::InvalidInput, "align_crop: size must be positive");
  require(image.width > 0 && image.height > 0, ErrorKind::InvalidInput, "align_crop: empty image");
  require(std::isfinite(box.x) && std::isfinite(box.y) && std::isfinite(box.w) && std::isfinite(box.h) &&
              box.w > 0.0 && box.h > 0.0,
          ErrorKind::DegenerateInput, "align_crop: degenerate face box");
  const double side = std::max(box.w, box.h) * 1.2;
  const double cx = box.x + box.w / 2.0, cy = box.y + box.h / 2.0;
  const double x0 = std::max(0.0, cx - side / 2.0), y0 = std::max(0.0, cy - side / 2.0);
  const double x1 = std::min(static_cast<double>(image.width), cx + side / 2.0);
  const double y1 = std::min(static_cast<double>(image.height), cy + side / 2.0);
  require(x1 > x0 && y1 > y0, ErrorKind::DegenerateInput, "align_crop: face box does not intersect the image");

  AlignedFace out;
  out.transform = {x0, y0, (x1 - x0) / size, (y1 - y0) / size};
  out.pixels = Tensor({3, size, size});
  const int64_t plane = static_cast<int64_t>(size) * size;
  for (int v = 0; v < size; ++v)
    for (int u = 0; u < size; ++u) {
      const Vec2 src = out.transform.to_source({static_cast<double>(u), static_cast<double>(v)});
      for (int c = 0; c < 3; ++c)
        out.pixels.data[static_cast<size_t>(c * plane + static_cast<int64_t>(v) * size + u)] =
            static_cast<float>(bilinear_sample(image, src[0], src[1], c) / 255.0);
    }
  return out;
}

std::vector<FrameResult> run_inference(Model& model, const std::vector<AlignedFace>& faces) {
  std::vector<FrameResult> results;
  if (faces.empty()) return results;
  const int size = model.config().landmark.input_size;
  std::vector<const Tensor*> ptrs;
  for (const auto& f : faces) {
    require(f.pixels.rank() == 3 && f.pixels.dim(0) == 3 && f.pixels.dim(1) == size && f.pixels.dim(2) == size,
            ErrorKind::Configuration,
            "face crop " + shape_str(f.pixels.shape) + " does not match the model input size " +
                std::to_string(size));
    ptrs.push_back(&f.pixels);
  }
  const ModelOutputs out = model.predict(batch_faces(ptrs));
  for (size_t i = 0; i < faces.size(); ++i) {
    FrameResult r;
    r.success = true;
    r.landmarks = out.landmarks[i];
    for (Vec2& p : r.landmarks.coords) p = faces[i].transform.to_source(p);
    r.au_probs = out.au_probs[i];
    r.gaze = out.gaze[i];
    r.emotion_probs = softmax(out.emotion_logits[i]);
    r.emotion_label = argmax(r.emotion_probs);
    results.push_back(std::move(r));
  }
  return results;
}

std::vector<FrameResult> process_frame(Model& model, const std::string& path, int frame,
                                       const InferenceOptions& opts) {
  auto failure = [&](int face_id, const FaceBox& box, const std::string& why) {
    FrameResult r;
    r.frame = frame;
    r.face_id = face_id;
    r.path = path;
    r.box = box;
    r.error = why;
    return r;
  };
  Image image;
  try {
    image = read_image(path);
  } catch (const Error& e) {
    return {failure(0, {}, e.what())};
  }
  std::vector<FaceBox> boxes;
  if (opts.detector == Detector::FullFrame) {
    boxes.push_back(full_frame_box(image));
  } else {
    require(opts.sidecar != nullptr, ErrorKind::InvalidInput, "sidecar detector needs detections");
    auto found = opts.sidecar->lookup(path);
    if (!found) return {failure(0, {}, "no detections for frame")};
    boxes = std::move(*found);
  }
  const int size = model.config().landmark.input_size;
  std::vector<FrameResult> results(boxes.size());
  std::vector<AlignedFace> faces;
  std::vector<size_t> slots;
  for (size_t i = 0; i < boxes.size(); ++i) {
    try {
      faces.push_back(align_crop(image, boxes[i], size));
      slots.push_back(i);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateInput) throw;
      results[i] = failure(static_cast<int>(i), boxes[i], e.what());
    }
  }
  auto inferred = run_inference(model, faces);
  for (size_t k = 0; k < slots.size(); ++k) results[slots[k]] = std::move(inferred[k]);
  for (size_t i = 0; i < boxes.size(); ++i) {
    results[i].frame = frame;
    results[i].face_id = static_cast<int>(i);
    results[i].path = path;
    results[i].box = boxes[i];
  }
  return results;
}

std::vector<std::string> list_frames(const std::string& input) {
  std::error_code ec;
  if (fs::is_regular_file(input, ec)) return {input};
  require(fs::is_directory(input, ec), ErrorKind::Io, "input not found: " + input);
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(input)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") out.push_back(entry.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  // avoid "-0.000000"
  if (std::string(buf) == "-0.000000") return "0.000000";
  return buf;
}

}  // namespace

std::vector<std::string> csv_header(const ModelConfig& cfg) {
  std::vector<std::string> h{"frame", "face_id", "confidence", "success"};
  const int n = cfg.landmark.num_landmarks;
  for (int i = 0; i < n; ++i) h.push_back("x_" + std::to_string(i));
  for (int i = 0; i < n; ++i) h.push_back("y_" + std::to_string(i));
  for (const char* g : kGazeHeads) h.push_back(std::string("gaze_") + g);
  for (int id : cfg.au.ids) h.push_back("AU" + std::to_string(id) + "_p");
  h.push_back("emotion_label");
  h.push_back("emotion_conf");
  for (const auto& name : cfg.emotion.class_names) h.push_back("p_" + name);
  return h;
}

std::string format_csv(const std::vector<FrameResult>& results, const ModelConfig& cfg) {
  const auto header = csv_header(cfg);
  std::string out;
  for (size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
  out += "\n";
  const size_t numeric = header.size() - 4;
  for (const FrameResult& r : results) {
    out += std::to_string(r.frame) + "," + std::to_string(r.face_id) + ",";
    if (!r.success) {
      // the confidence of a detected box is still known
      out += (r.box.w > 0 ? fmt6(r.box.confidence) : "") + ",0";
      out += std::string(numeric, ',') + "\n";
      continue;
    }
    out += fmt6(r.box.confidence) + ",1";
    for (const Vec2& p : r.landmarks.coords) out += "," + fmt6(p[0]);
    for (const Vec2& p : r.landmarks.coords) out += "," + fmt6(p[1]);
    for (double a : r.gaze.as_array()) out += "," + fmt6(a);
    for (double p : r.au_probs) out += "," + fmt6(p);
    out += "," + cfg.emotion.class_names.at(static_cast<size_t>(r.emotion_label));
    out += "," + fmt6(r.emotion_probs.at(static_cast<size_t>(r.emotion_label)));
    for (double p : r.emotion_probs) out += "," + fmt6(p);
    out += "\n";
  }
  return out;
}

std::string format_json(const std::vector<FrameResult>& results, const ModelConfig& cfg) {
  ordered_json arr = ordered_json::array();
  for (const FrameResult& r : results) {
    ordered_json j;
    j["frame"] = r.frame;
    j["face_id"] = r.face_id;
    j["path"] = r.path;
    j["confidence"] = r.box.confidence;
    j["success"] = r.success;
    j["box"] = {{"x", r.box.x}, {"y", r.box.y}, {"w", r.box.w}, {"h", r.box.h}};
    if (!r.success) {
      j["error"] = r.error;
      arr.push_back(std::move(j));
      continue;
    }
    ordered_json lms = ordered_json::array();
    for (const Vec2& p : r.landmarks.coords) lms.push_back({p[0], p[1]});
    j["landmarks"] = std::move(lms);
    j["gaze"] = {{"left_yaw", r.gaze.left_yaw},
                 {"left_pitch", r.gaze.left_pitch},
                 {"right_yaw", r.gaze.right_yaw},
                 {"right_pitch", r.gaze.right_pitch}};
    ordered_json au = ordered_json::object();
    for (size_t k = 0; k < r.au_probs.size(); ++k) au["AU" + std::to_string(cfg.au.ids.at(k))] = r.au_probs[k];
    j["au"] = std::move(au);
    ordered_json probs = ordered_json::object();
    for (size_t k = 0; k < r.emotion_probs.size(); ++k) probs[cfg.emotion.class_names.at(k)] = r.emotion_probs[k];
    j["emotion"] = {{"label", cfg.emotion.class_names.at(static_cast<size_t>(r.emotion_label))},
                    {"confidence", r.emotion_probs.at(static_cast<size_t>(r.emotion_label))},
                    {"probabilities", std::move(probs)}};
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

void write_results(const std::vector<FrameResult>& results, const ModelConfig& cfg, const std::string& path,
                   OutputFormat format) {
  const std::string text = format == OutputFormat::Csv ? format_csv(results, cfg) : format_json(results, cfg);
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::Io, "cannot write " + path);
  out << text;
  require(out.good(), ErrorKind::Io, "failed writing " + path);
}

std::pair<std::vector<size_t>, std::vector<size_t>> eye_regions(const ModelConfig& cfg) {
  auto range = [](size_t a, size_t b) {
    std::vector<size_t> v;
    for (size_t i = a; i < b; ++i) v.push_back(i);
    return v;
  };
  if (cfg.landmark.num_landmarks == 68) return {range(36, 42), range(42, 48)};
  if (cfg.landmark.num_landmarks == 98) return {range(60, 68), range(68, 76)};
  return {{static_cast<size_t>(cfg.left_eye)}, {static_cast<size_t>(cfg.right_eye)}};
}

namespace {

void put(Image& img, int x, int y, const std::array<uint8_t, 3>& c) {
  if (!img.contains(x, y)) return;
  uint8_t* p = img.pixel(x, y);
  p[0] = c[0];
  p[1] = c[1];
  p[2] = c[2];
}

void line(Image& img, double xa, double ya, double xb, double yb, const std::array<uint8_t, 3>& c) {
  const int steps = static_cast<int>(std::ceil(std::max(std::abs(xb - xa), std::abs(yb - ya))));
  for (int i = 0; i <= steps; ++i) {
    const double t = steps ? static_cast<double>(i) / steps : 0.0;
    put(img, static_cast<int>(std::lround(xa + t * (xb - xa))), static_cast<int>(std::lround(ya + t * (yb - ya))), c);
  }
}

}  // namespace

Image render_overlay(const Image& image, const std::vector<FrameResult>& results, const ModelConfig& cfg,
                     const OverlayColors& colors) {
  Image out = image;
  const auto [left, right] = eye_regions(cfg);
  for (const FrameResult& r : results) {
    if (!r.success) continue;
    const double x0 = r.box.x, y0 = r.box.y, x1 = r.box.x + r.box.w - 1, y1 = r.box.y + r.box.h - 1;
    line(out, x0, y0, x1, y0, colors.box);
    line(out, x0, y1, x1, y1, colors.box);
    line(out, x0, y0, x0, y1, colors.box);
    line(out, x1, y0, x1, y1, colors.box);
    for (const Vec2& p : r.landmarks.coords) {
      const int cx = static_cast<int>(std::lround(p[0])), cy = static_cast<int>(std::lround(p[1]));
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) put(out, cx + dx, cy + dy, colors.landmark);
    }
    const double length = 0.4 * r.box.w;
    auto ray = [&](const std::vector<size_t>& idx, double yaw, double pitch) {
      Vec2 c{0.0, 0.0};
      for (size_t i : idx) {
        c[0] += r.landmarks.coords.at(i)[0];
        c[1] += r.landmarks.coords.at(i)[1];
      }
      c[0] /= static_cast<double>(idx.size());
      c[1] /= static_cast<double>(idx.size());
      const auto g = angles_to_vector(yaw, pitch);
      line(out, c[0], c[1], c[0] + length * g[0], c[1] + length * g[1], colors.gaze);
    };
    ray(left, r.gaze.left_yaw, r.gaze.left_pitch);
    ray(right, r.gaze.right_yaw, r.gaze.right_pitch);
  }
  return out;
}

}  // namespace mtface
