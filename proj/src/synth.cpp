#include "mtface/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "mtface/error.hpp"
#include "mtface/image.hpp"

namespace mtface {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

void append_arc(std::vector<Vec2>& pts, Vec2 center, double rx, double ry, double from, double to, int count,
                bool include_end) {
  const int steps = include_end ? count - 1 : count;
  for (int i = 0; i < count; ++i) {
    const double t = from + (to - from) * (steps > 0 ? static_cast<double>(i) / steps : 0.0);
    pts.push_back({center[0] + rx * std::cos(t), center[1] + ry * std::sin(t)});
  }
}

struct Rgb {
  double r, g, b;
};

Rgb hue_color(double hue, double sat, double val) {
  const double h = std::fmod(hue, 1.0) * 6.0;
  const double c = val * sat;
  const double x = c * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
  Rgb out{0, 0, 0};
  if (h < 1) out = {c, x, 0};
  else if (h < 2) out = {x, c, 0};
  else if (h < 3) out = {0, c, x};
  else if (h < 4) out = {0, x, c};
  else if (h < 5) out = {x, 0, c};
  else out = {c, 0, x};
  const double m = val - c;
  return {out.r + m, out.g + m, out.b + m};
}

// Float canvas with soft-edged primitives; quantized once at the end.
class Canvas {
 public:
  explicit Canvas(int size) : size_(size), px_(static_cast<size_t>(size) * size * 3, 0.0) {}

  void blend(int x, int y, const Rgb& c, double alpha) {
    if (x < 0 || y < 0 || x >= size_ || y >= size_ || alpha <= 0.0) return;
    double* p = &px_[(static_cast<size_t>(y) * size_ + x) * 3];
    alpha = std::min(alpha, 1.0);
    p[0] += alpha * (c.r - p[0]);
    p[1] += alpha * (c.g - p[1]);
    p[2] += alpha * (c.b - p[2]);
  }

  void fill(const Rgb& c) {
    for (int y = 0; y < size_; ++y)
      for (int x = 0; x < size_; ++x) blend(x, y, c, 1.0);
  }

  // Gaussian blob centered at sub-pixel (cx, cy) in pixel-index coordinates.
  void blob(double cx, double cy, double sigma, const Rgb& c, double strength = 1.0) {
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    for (int y = static_cast<int>(std::floor(cy)) - r; y <= static_cast<int>(std::ceil(cy)) + r; ++y)
      for (int x = static_cast<int>(std::floor(cx)) - r; x <= static_cast<int>(std::ceil(cx)) + r; ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        blend(x, y, c, strength * std::exp(-d2 / (2.0 * sigma * sigma)));
      }
  }

  void ellipse(double cx, double cy, double rx, double ry, double angle, const Rgb& c) {
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double reach = std::max(rx, ry) + 1.0;
    for (int y = static_cast<int>(cy - reach); y <= static_cast<int>(cy + reach); ++y)
      for (int x = static_cast<int>(cx - reach); x <= static_cast<int>(cx + reach); ++x) {
        const double dx = x - cx, dy = y - cy;
        const double u = (ca * dx + sa * dy) / rx, v = (-sa * dx + ca * dy) / ry;
        const double r = std::sqrt(u * u + v * v);
        // one-pixel soft edge
        blend(x, y, c, std::clamp((1.0 - r) * std::min(rx, ry) + 0.5, 0.0, 1.0));
      }
  }

  void rect(double x0, double y0, double w, double h, const Rgb& c) {
    for (int y = static_cast<int>(std::floor(y0)); y < static_cast<int>(std::ceil(y0 + h)); ++y)
      for (int x = static_cast<int>(std::floor(x0)); x < static_cast<int>(std::ceil(x0 + w)); ++x) blend(x, y, c, 1.0);
  }

  void noise(Rng& rng, double amplitude) {
    for (double& v : px_) v += amplitude * (rng.uniform() - 0.5);
  }

  Image to_image() const {
    Image img(size_, size_);
    for (size_t i = 0; i < px_.size(); ++i)
      img.rgb[i] = static_cast<uint8_t>(std::lround(std::clamp(px_[i], 0.0, 1.0) * 255.0));
    return img;
  }

 private:
  int size_;
  std::vector<double> px_;
};

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::Io, "cannot write " + path.string());
  out << text;
  require(out.good(), ErrorKind::Io, "failed writing " + path.string());
}

// AU marker anchors in unit face coordinates.
Vec2 au_anchor(int k, int num_aus) {
  const double t = num_aus > 1 ? static_cast<double>(k) / (num_aus - 1) : 0.5;
  const double angle = kPi * (1.1 + 0.8 * t);  // arc across the forehead
  return {0.82 * std::cos(angle), -0.05 + 0.82 * std::sin(angle)};
}

}  // namespace

std::vector<Vec2> landmark_template(int num_landmarks) {
  require(num_landmarks >= 1, ErrorKind::InvalidInput, "landmark_template: need at least one landmark");
  std::vector<Vec2> pts;
  if (num_landmarks != 68) {
    append_arc(pts, {0.0, 0.05}, 0.95, 1.05, 0.0, 2.0 * kPi, num_landmarks, false);
    return pts;
  }
  append_arc(pts, {0.0, -0.1}, 1.0, 1.2, kPi, 0.0, 17, true);                      // jaw 0-16
  for (int i = 0; i < 5; ++i) pts.push_back({-0.85 + 0.15 * i, -0.52 - 0.08 * std::sin(kPi * i / 4.0)});  // brow 17-21
  for (int i = 0; i < 5; ++i) pts.push_back({0.25 + 0.15 * i, -0.52 - 0.08 * std::sin(kPi * i / 4.0)});   // brow 22-26
  for (int i = 0; i < 4; ++i) pts.push_back({0.0, -0.35 + 0.15 * i});                                     // bridge 27-30
  for (int i = 0; i < 5; ++i) pts.push_back({-0.2 + 0.1 * i, 0.25 + 0.04 * std::sin(kPi * i / 4.0)});     // nostrils 31-35
  const std::array<double, 6> eye_r{kPi, 1.25 * kPi, 1.75 * kPi, 0.0, 0.25 * kPi, 0.75 * kPi};
  for (double t : eye_r) pts.push_back({-0.4 + 0.13 * std::cos(t), -0.3 + 0.07 * std::sin(t)});          // eye 36-41
  const std::array<double, 6> eye_l{kPi, 1.25 * kPi, 1.75 * kPi, 0.0, 0.25 * kPi, 0.75 * kPi};
  for (double t : eye_l) pts.push_back({0.4 + 0.13 * std::cos(t), -0.3 + 0.07 * std::sin(t)});           // eye 42-47
  append_arc(pts, {0.0, 0.55}, 0.35, 0.15, kPi, 3.0 * kPi, 12, false);              // outer mouth 48-59
  append_arc(pts, {0.0, 0.55}, 0.2, 0.06, kPi, 3.0 * kPi, 8, false);                // inner mouth 60-67
  // outer mouth runs over the top lip first
  for (size_t i = 48; i < 68; ++i) pts[i][1] = 2.0 * 0.55 - pts[i][1];
  return pts;
}

SynthManifests generate_synthetic_dataset(const SynthSpec& spec, const std::string& out_dir) {
  require(spec.n >= 1, ErrorKind::InvalidInput, "synth: n must be at least 1");
  require(spec.image_size >= 16, ErrorKind::InvalidInput, "synth: image size must be at least 16");
  require(spec.num_aus >= 1 && spec.num_classes >= 2, ErrorKind::InvalidInput, "synth: bad label config");
  for (const auto& t : spec.tasks)
    require(t == "landmark" || t == "au" || t == "gaze" || t == "emotion", ErrorKind::InvalidInput,
            "synth: unknown task '" + t + "'");
  std::error_code ec;
  const fs::path root(out_dir);
  fs::create_directories(root / "images", ec);
  require(!ec && fs::is_directory(root / "images"), ErrorKind::Io, "synth: cannot create " + out_dir);

  const double s = spec.image_size;
  const auto tmpl = landmark_template(spec.num_landmarks);

  std::string lm_csv = "path";
  for (int i = 0; i < spec.num_landmarks; ++i) lm_csv += ",x_" + std::to_string(i) + ",y_" + std::to_string(i);
  lm_csv += "\n";
  std::string au_csv = "path";
  for (int k = 1; k <= spec.num_aus; ++k) au_csv += ",au_" + std::to_string(k);
  au_csv += "\n";
  std::string gaze_csv = "path,yaw_rad,pitch_rad\n";
  std::string emo_csv = "path,emotion_id,pose_yaw_deg\n";

  for (int i = 0; i < spec.n; ++i) {
    Rng rng(mix_seed(spec.seed, 0x5eed, static_cast<uint64_t>(i)));
    // labels
    const int emotion = static_cast<int>(rng.below(static_cast<uint64_t>(spec.num_classes)));
    const double pose = rng.uniform(0.0, 90.0);
    const double yaw = rng.uniform(-0.6, 0.6);
    const double pitch = rng.uniform(-0.4, 0.4);
    std::vector<int> aus(static_cast<size_t>(spec.num_aus));
    for (int k = 0; k < spec.num_aus; ++k) aus[static_cast<size_t>(k)] = rng.uniform() < 0.2 + 0.5 * (k % 4) / 3.0;
    // face geometry
    const double cx = s * (0.5 + rng.uniform(-0.05, 0.05));
    const double cy = s * (0.5 + rng.uniform(-0.05, 0.05));
    const double half = s * rng.uniform(0.30, 0.35);
    const double rot = rng.uniform(-0.15, 0.15);
    const double cr = std::cos(rot), sr = std::sin(rot);
    auto to_px = [&](const Vec2& p) {
      return Vec2{cx + half * (cr * p[0] - sr * p[1]), cy + half * (sr * p[0] + cr * p[1])};
    };
    std::vector<Vec2> lms;
    for (const Vec2& p : tmpl) {
      Vec2 q = to_px(p);
      q[0] = std::clamp(q[0] + rng.normal() * 0.006 * s, 0.0, s - 1.0);
      q[1] = std::clamp(q[1] + rng.normal() * 0.006 * s, 0.0, s - 1.0);
      lms.push_back(q);
    }

    Canvas canvas(spec.image_size);
    canvas.fill(hue_color(static_cast<double>(emotion) / spec.num_classes, 0.55, 0.75));
    const Rgb skin = hue_color(0.07 + rng.uniform(-0.02, 0.02), 0.35, rng.uniform(0.75, 0.9));
    canvas.ellipse(cx, cy + 0.05 * half, 1.05 * half, 1.3 * half, rot, skin);
    // eyes with gaze-driven pupils
    for (const double side : {-0.4, 0.4}) {
      const Vec2 c = to_px({side, -0.3});
      canvas.ellipse(c[0], c[1], 0.16 * half, 0.09 * half, rot, {0.97, 0.97, 0.97});
      const Vec2 pupil{c[0] - std::sin(yaw) * 0.1 * half, c[1] - std::sin(pitch) * 0.07 * half};
      canvas.blob(pupil[0], pupil[1], 0.035 * half, {0.05, 0.05, 0.1});
    }
    for (int k = 0; k < spec.num_aus; ++k) {
      if (!aus[static_cast<size_t>(k)]) continue;
      const Vec2 a = to_px(au_anchor(k, spec.num_aus));
      const double w = std::max(1.5, 0.09 * half);
      canvas.rect(a[0] - w / 2, a[1] - w / 2, w, w, hue_color(static_cast<double>(k) / spec.num_aus, 0.9, 0.6));
    }
    for (size_t j = 0; j < lms.size(); ++j)
      canvas.blob(lms[j][0], lms[j][1], std::max(0.6, s / 96.0),
                  hue_color(static_cast<double>(j) / lms.size(), 0.8, 0.35), 0.9);
    canvas.noise(rng, 0.03);

    char name[32];
    std::snprintf(name, sizeof name, "%04d.ppm", i);
    const std::string rel = std::string("images/") + name;
    write_ppm(canvas.to_image(), (root / rel).string());

    lm_csv += rel;
    for (const Vec2& p : lms) lm_csv += "," + fmt6(p[0]) + "," + fmt6(p[1]);
    lm_csv += "\n";
    au_csv += rel;
    for (int a : aus) au_csv += "," + std::to_string(a);
    au_csv += "\n";
    gaze_csv += rel + "," + fmt6(yaw) + "," + fmt6(pitch) + "\n";
    emo_csv += rel + "," + std::to_string(emotion) + "," + fmt6(pose) + "\n";
  }

  SynthManifests out;
  auto emit = [&](const char* task, const char* file, const std::string& text, std::string& slot) {
    if (!spec.tasks.count(task)) return;
    write_text(root / file, text);
    slot = (root / file).string();
  };
  emit("landmark", "landmarks.csv", lm_csv, out.landmark);
  emit("au", "au.csv", au_csv, out.au);
  emit("gaze", "gaze.csv", gaze_csv, out.gaze);
  emit("emotion", "emotion.csv", emo_csv, out.emotion);
  return out;
}

}  // namespace mtface
