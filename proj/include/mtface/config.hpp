#pragma once

#include <map>
#include <optional>
#include <string>

#include "mtface/model.hpp"
#include "mtface/multitask.hpp"

namespace mtface {

// `key = value` lines; '#' starts a comment. Unknown keys are rejected.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& base_dir = ".");
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  double number(const std::string& key, double fallback) const;
  int integer(const std::string& key, int fallback) const;
  // Resolved relative to the config file's directory; empty when absent.
  std::string path(const std::string& key) const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::string base_dir_;
};

ModelConfig model_config_from(const KeyValueConfig& kv);

// Stage defaults, then the global keys, then `stage<N>.` overrides.
TrainConfig train_config_from(const KeyValueConfig& kv, int stage);

struct ManifestPaths {
  std::string landmark, au, gaze, emotion;
};
ManifestPaths manifests_from(const KeyValueConfig& kv);

}  // namespace mtface
