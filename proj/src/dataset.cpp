#include "mtface/dataset.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mtface/error.hpp"
#include "mtface/image.hpp"

namespace mtface {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string resolve(const std::string& manifest, const std::string& rel) {
  const fs::path p(rel);
  if (p.is_absolute()) return rel;
  return (fs::path(manifest).parent_path() / p).string();
}

void expect_columns(const CsvTable& t, size_t min, const std::string& path) {
  require(!t.header.empty() && t.header[0] == "path", ErrorKind::Data,
          path + ": first column must be 'path'");
  require(t.header.size() >= min, ErrorKind::Data, path + ": too few columns");
  for (size_t r = 0; r < t.rows.size(); ++r)
    require(t.rows[r].size() == t.header.size(), ErrorKind::Data,
            path + ": row " + std::to_string(r + 2) + " has " + std::to_string(t.rows[r].size()) +
                " cells, header has " + std::to_string(t.header.size()));
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot open " + path);
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) {
      t.header = split_line(line);
      first = false;
    } else {
      t.rows.push_back(split_line(line));
    }
  }
  require(!first, ErrorKind::Data, path + ": empty file");
  return t;
}

double parse_double(const std::string& s, const std::string& context) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(v),
          ErrorKind::Data, context + ": not a finite number: '" + s + "'");
  return v;
}

int parse_int(const std::string& s, const std::string& context) {
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc() && res.ptr == s.data() + s.size(), ErrorKind::Data,
          context + ": not an integer: '" + s + "'");
  return v;
}

std::vector<LandmarkSample> load_landmark_manifest(const std::string& path) {
  const CsvTable t = read_csv(path);
  expect_columns(t, 3, path);
  require((t.header.size() - 1) % 2 == 0, ErrorKind::Data, path + ": odd coordinate column count");
  const size_t n = (t.header.size() - 1) / 2;
  for (size_t i = 0; i < n; ++i)
    require(t.header[1 + 2 * i] == "x_" + std::to_string(i) &&
                t.header[2 + 2 * i] == "y_" + std::to_string(i),
            ErrorKind::Data, path + ": expected columns x_" + std::to_string(i) + ",y_" + std::to_string(i));
  std::vector<LandmarkSample> out;
  for (const auto& row : t.rows) {
    LandmarkSample s;
    s.path = resolve(path, row[0]);
    for (size_t i = 0; i < n; ++i)
      s.landmarks.coords.push_back({parse_double(row[1 + 2 * i], path), parse_double(row[2 + 2 * i], path)});
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<AUSample> load_au_manifest(const std::string& path) {
  const CsvTable t = read_csv(path);
  expect_columns(t, 2, path);
  for (size_t i = 1; i < t.header.size(); ++i)
    require(t.header[i] == "au_" + std::to_string(i), ErrorKind::Data,
            path + ": expected column au_" + std::to_string(i));
  std::vector<AUSample> out;
  for (const auto& row : t.rows) {
    AUSample s;
    s.path = resolve(path, row[0]);
    for (size_t i = 1; i < row.size(); ++i) {
      const int v = parse_int(row[i], path);
      require(v == 0 || v == 1, ErrorKind::Data, path + ": AU labels must be 0 or 1");
      s.labels.push_back(v);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<GazeSample> load_gaze_manifest(const std::string& path) {
  const CsvTable t = read_csv(path);
  expect_columns(t, 3, path);
  const int yaw = t.column("yaw_rad"), pitch = t.column("pitch_rad");
  const int ly = t.column("left_yaw_rad"), lp = t.column("left_pitch_rad");
  const int ry = t.column("right_yaw_rad"), rp = t.column("right_pitch_rad");
  const bool per_eye = ly >= 0 && lp >= 0 && ry >= 0 && rp >= 0;
  require(per_eye || (yaw >= 0 && pitch >= 0), ErrorKind::Data,
          path + ": need yaw_rad,pitch_rad or the four per-eye columns");
  std::vector<GazeSample> out;
  for (const auto& row : t.rows) {
    GazeSample s;
    s.path = resolve(path, row[0]);
    if (per_eye) {
      s.gaze = {parse_double(row[static_cast<size_t>(ly)], path), parse_double(row[static_cast<size_t>(lp)], path),
                parse_double(row[static_cast<size_t>(ry)], path), parse_double(row[static_cast<size_t>(rp)], path)};
    } else {
      // one label per face supervises both eyes
      const double y = parse_double(row[static_cast<size_t>(yaw)], path);
      const double p = parse_double(row[static_cast<size_t>(pitch)], path);
      s.gaze = {y, p, y, p};
    }
    out.push_back(s);
  }
  return out;
}

std::vector<EmotionSample> load_emotion_manifest(const std::string& path) {
  const CsvTable t = read_csv(path);
  expect_columns(t, 2, path);
  const int label = t.column("emotion_id");
  const int pose = t.column("pose_yaw_deg");
  require(label >= 0, ErrorKind::Data, path + ": missing emotion_id column");
  std::vector<EmotionSample> out;
  for (const auto& row : t.rows) {
    EmotionSample s;
    s.path = resolve(path, row[0]);
    s.label = parse_int(row[static_cast<size_t>(label)], path);
    if (pose >= 0 && !row[static_cast<size_t>(pose)].empty())
      s.pose_yaw_deg = parse_double(row[static_cast<size_t>(pose)], path);
    out.push_back(s);
  }
  return out;
}

Tensor load_face(const std::string& path, int size) {
  const Image img = read_image(path);
  require(img.width == size && img.height == size, ErrorKind::Data,
          path + ": expected a " + std::to_string(size) + "x" + std::to_string(size) + " aligned crop, got " +
              std::to_string(img.width) + "x" + std::to_string(img.height));
  return to_tensor(img);
}

}  // namespace mtface
