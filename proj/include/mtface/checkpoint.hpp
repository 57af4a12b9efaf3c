#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mtface/model.hpp"
#include "mtface/multitask.hpp"

namespace mtface {

inline constexpr char kCheckpointMagic[4] = {'O', 'F', '3', 'W'};
inline constexpr uint32_t kCheckpointVersion = 1;
// Tensors under this prefix echo the model config and are not parameters.
inline constexpr const char* kConfigPrefix = "config.";

// Named tensors in file order.
struct Checkpoint {
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

// Little-endian layout: magic, u32 version, u32 count, then per tensor
// {u16 name length, name bytes, u8 dtype (0 = f32), u8 rank, u64 dims, f32 values},
// followed by a CRC32 of every preceding byte.
std::vector<uint8_t> encode_checkpoint(const Checkpoint& ckpt);
// Throws BadMagic, BadVersion, CrcMismatch or Truncated.
Checkpoint decode_checkpoint(std::span<const uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

uint32_t crc32(std::span<const uint8_t> bytes);

// Model parameters plus config echo and completed-stage markers.
Checkpoint make_checkpoint(const Model& model, const StageState& state);
ModelConfig config_from_checkpoint(const Checkpoint& ckpt);
StageState stage_state_from_checkpoint(const Checkpoint& ckpt);
// Copies every model parameter from the checkpoint; a missing tensor or a
// shape mismatch is a configuration error.
void load_parameters(Model& model, const Checkpoint& ckpt);

struct ParameterCount {
  std::map<std::string, int64_t> per_module;  // keyed by the first name component
  int64_t total = 0;
};
ParameterCount count_parameters(const Checkpoint& ckpt);

}  // namespace mtface
