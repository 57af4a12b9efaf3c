#include "mtface/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "mtface/dataset.hpp"
#include "mtface/error.hpp"

namespace mtface {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k{"stage", "lr", "epochs", "max_steps", "beta1", "beta2", "weight_decay", "seed",
                            "batch.au", "batch.gaze", "batch.emotion", "batch.landmark",
                            "manifest.landmark", "manifest.au", "manifest.gaze", "manifest.emotion",
                            "loss_scale.au", "loss_scale.gaze", "loss_scale.emotion", "star_distance",
                            "landmark.num_landmarks", "landmark.num_stacks", "landmark.input_size",
                            "landmark.heatmap_size", "landmark.channels", "backbone.features",
                            "backbone.blocks", "au.dim", "au.threshold", "au.ids", "emotion.num_classes",
                            "emotion.smoothing", "eyes.left", "eyes.right", "init_weights", "model_seed"};
    for (const char* s : {"stage1.", "stage2.", "stage3."})
      for (const char* f : {"lr", "epochs", "max_steps"}) k.insert(std::string(s) + f);
    return k;
  }();
  return keys;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& base_dir) {
  KeyValueConfig kv;
  kv.base_dir_ = base_dir;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::Configuration,
            "config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    require(known_keys().count(key) != 0, ErrorKind::Configuration,
            "config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    require(!value.empty(), ErrorKind::Configuration, "config key '" + key + "' has no value");
    require(kv.values_.emplace(key, value).second, ErrorKind::Configuration, "config key '" + key + "' repeated");
  }
  return kv;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const fs::path parent = fs::path(path).parent_path();
  return parse(ss.str(), parent.empty() ? "." : parent.string());
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

double KeyValueConfig::number(const std::string& key, double fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  try {
    return parse_double(*v, "config key '" + key + "'");
  } catch (const Error& e) {
    throw Error(ErrorKind::Configuration, e.what());
  }
}

int KeyValueConfig::integer(const std::string& key, int fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  try {
    return parse_int(*v, "config key '" + key + "'");
  } catch (const Error& e) {
    throw Error(ErrorKind::Configuration, e.what());
  }
}

std::string KeyValueConfig::path(const std::string& key) const {
  const auto v = get(key);
  if (!v) return "";
  const fs::path p(*v);
  return p.is_absolute() ? p.string() : (fs::path(base_dir_) / p).string();
}

ModelConfig model_config_from(const KeyValueConfig& kv) {
  ModelConfig m;
  auto& l = m.landmark;
  l.num_landmarks = kv.integer("landmark.num_landmarks", l.num_landmarks);
  l.num_stacks = kv.integer("landmark.num_stacks", l.num_stacks);
  l.input_size = kv.integer("landmark.input_size", l.input_size);
  l.heatmap_size = kv.integer("landmark.heatmap_size", l.heatmap_size);
  l.channels = kv.integer("landmark.channels", l.channels);
  m.backbone.features = kv.integer("backbone.features", m.backbone.features);
  m.backbone.blocks = kv.integer("backbone.blocks", m.backbone.blocks);
  m.au.dim = kv.integer("au.dim", m.au.dim);
  m.au.presence_threshold = kv.number("au.threshold", m.au.presence_threshold);
  if (const auto ids = kv.get("au.ids")) {
    m.au.ids.clear();
    std::stringstream ss(*ids);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        m.au.ids.push_back(parse_int(trim(item), "au.ids"));
      } catch (const Error& e) {
        throw Error(ErrorKind::Configuration, e.what());
      }
    }
    m.au.num_aus = static_cast<int>(m.au.ids.size());
  }
  m.emotion.num_classes = kv.integer("emotion.num_classes", m.emotion.num_classes);
  m.emotion.smoothing = kv.number("emotion.smoothing", m.emotion.smoothing);
  if (m.emotion.num_classes != static_cast<int>(m.emotion.class_names.size())) {
    m.emotion.class_names.clear();
    for (int k = 0; k < m.emotion.num_classes; ++k) m.emotion.class_names.push_back("class" + std::to_string(k));
  }
  const auto eyes = default_eye_indices(l.num_landmarks);
  m.left_eye = kv.integer("eyes.left", static_cast<int>(eyes.first));
  m.right_eye = kv.integer("eyes.right", static_cast<int>(eyes.second));
  m.validate();
  return m;
}

TrainConfig train_config_from(const KeyValueConfig& kv, int stage) {
  TrainConfig c = TrainConfig::defaults_for_stage(stage);
  const std::string s = "stage" + std::to_string(stage) + ".";
  c.lr = kv.number(s + "lr", kv.number("lr", c.lr));
  c.epochs = kv.integer(s + "epochs", kv.integer("epochs", c.epochs));
  c.max_steps = kv.integer(s + "max_steps", kv.integer("max_steps", c.max_steps));
  c.beta1 = kv.number("beta1", c.beta1);
  c.beta2 = kv.number("beta2", c.beta2);
  c.weight_decay = kv.number("weight_decay", c.weight_decay);
  const int seed = kv.integer("seed", 0);
  require(seed >= 0, ErrorKind::Configuration, "seed must be non-negative");
  c.seed = static_cast<uint64_t>(seed);
  auto batch = [&](const char* key, size_t fallback) {
    const int b = kv.integer(key, static_cast<int>(fallback));
    require(b > 0, ErrorKind::Configuration, std::string(key) + " must be positive");
    return static_cast<size_t>(b);
  };
  c.batch_landmark = batch("batch.landmark", c.batch_landmark);
  c.batch_au = batch("batch.au", c.batch_au);
  c.batch_gaze = batch("batch.gaze", c.batch_gaze);
  c.batch_emotion = batch("batch.emotion", c.batch_emotion);
  c.loss_scale = {kv.number("loss_scale.au", 1.0), kv.number("loss_scale.gaze", 1.0),
                  kv.number("loss_scale.emotion", 1.0)};
  if (const auto d = kv.get("star_distance")) {
    require(*d == "l1" || *d == "smooth_l1", ErrorKind::Configuration, "star_distance must be l1 or smooth_l1");
    c.star_distance = *d == "l1" ? Distance::L1 : Distance::SmoothL1;
  }
  c.validate();
  return c;
}

ManifestPaths manifests_from(const KeyValueConfig& kv) {
  return {kv.path("manifest.landmark"), kv.path("manifest.au"), kv.path("manifest.gaze"),
          kv.path("manifest.emotion")};
}

}  // namespace mtface
