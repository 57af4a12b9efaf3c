#include "mtface/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mtface/error.hpp"

namespace mtface {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
  }
  void bytes(const void* data, size_t n) {
    const auto* p = static_cast<const uint8_t*>(data);
    out.insert(out.end(), p, p + n);
  }
  std::vector<uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> b) : b_(b) {}
  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const uint8_t* take(size_t n) {
    require(n <= b_.size() - pos_, ErrorKind::Truncated, "checkpoint truncated");
    const uint8_t* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }
  size_t remaining() const { return b_.size() - pos_; }

 private:
  std::span<const uint8_t> b_;
  size_t pos_ = 0;
};

Tensor config_tensor(std::initializer_list<double> values) {
  Tensor t({static_cast<int64_t>(values.size())});
  size_t i = 0;
  for (double v : values) t.data[i++] = static_cast<float>(v);
  return t;
}

int as_int(const Tensor& t, size_t i) { return static_cast<int>(t.data.at(i)); }

const Tensor& need(const Checkpoint& c, const std::string& name) {
  const Tensor* t = c.find(name);
  require(t != nullptr, ErrorKind::Configuration, "checkpoint has no '" + name + "'");
  return *t;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

uint32_t crc32(std::span<const uint8_t> bytes) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths
  size_t off = 0;
  while (off < bytes.size()) {
    const size_t n = std::min<size_t>(bytes.size() - off, 1u << 30);
    c = ::crc32(c, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<uint32_t>(c);
}

std::vector<uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.put<uint32_t>(kCheckpointVersion);
  w.put<uint32_t>(static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    require(name.size() <= 0xffff, ErrorKind::InvalidInput, "tensor name too long: " + name);
    require(t.rank() <= 0xff, ErrorKind::InvalidInput, "tensor rank too large: " + name);
    require(static_cast<int64_t>(t.data.size()) == t.numel(), ErrorKind::InvalidInput,
            "tensor data does not match its shape: " + name);
    w.put<uint16_t>(static_cast<uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.put<uint8_t>(0);
    w.put<uint8_t>(static_cast<uint8_t>(t.rank()));
    for (int64_t d : t.shape) w.put<uint64_t>(static_cast<uint64_t>(d));
    w.bytes(t.data.data(), t.data.size() * sizeof(float));
  }
  w.put<uint32_t>(crc32(w.out));
  return std::move(w.out);
}

Checkpoint decode_checkpoint(std::span<const uint8_t> bytes) {
  require(bytes.size() >= 4, ErrorKind::Truncated, "checkpoint truncated");
  require(std::memcmp(bytes.data(), kCheckpointMagic, 4) == 0, ErrorKind::BadMagic,
          "not a checkpoint (bad magic)");
  require(bytes.size() >= 16, ErrorKind::Truncated, "checkpoint truncated");
  const auto body = bytes.first(bytes.size() - 4);
  uint32_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 4);
  Reader r(body);
  r.take(4);
  const auto version = r.get<uint32_t>();
  // Version is checked before the CRC so a future format is reported as such.
  require(version == kCheckpointVersion, ErrorKind::BadVersion,
          "unsupported checkpoint version " + std::to_string(version));
  require(crc32(body) == stored, ErrorKind::CrcMismatch, "checkpoint CRC mismatch");
  const auto count = r.get<uint32_t>();
  Checkpoint out;
  for (uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<uint16_t>();
    const auto* name = r.take(len);
    std::string n(reinterpret_cast<const char*>(name), len);
    const auto dtype = r.get<uint8_t>();
    require(dtype == 0, ErrorKind::Integrity, "unsupported dtype for tensor " + n);
    const auto rank = r.get<uint8_t>();
    Shape shape;
    uint64_t numel = 1;
    for (int d = 0; d < rank; ++d) {
      const auto dim = r.get<uint64_t>();
      require(dim <= (uint64_t{1} << 40), ErrorKind::Integrity, "implausible dimension in tensor " + n);
      shape.push_back(static_cast<int64_t>(dim));
      numel *= dim;
    }
    require(numel * sizeof(float) <= r.remaining(), ErrorKind::Truncated, "checkpoint truncated in " + n);
    Tensor t(shape);
    std::memcpy(t.data.data(), r.take(numel * sizeof(float)), numel * sizeof(float));
    require(out.find(n) == nullptr, ErrorKind::Integrity, "duplicate tensor name " + n);
    out.tensors.emplace_back(std::move(n), std::move(t));
  }
  require(r.remaining() == 0, ErrorKind::Integrity, "trailing bytes after the last tensor");
  return out;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::Io, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorKind::Io, "failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::Io, "cannot open " + path);
  const std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

Checkpoint make_checkpoint(const Model& model, const StageState& state) {
  Checkpoint c;
  const ModelConfig& m = model.config();
  const auto& l = m.landmark;
  c.tensors.emplace_back("config.landmark",
                         config_tensor({double(l.num_landmarks), double(l.num_stacks), double(l.input_size),
                                        double(l.heatmap_size), double(l.channels)}));
  c.tensors.emplace_back("config.backbone", config_tensor({double(m.backbone.features), double(m.backbone.blocks)}));
  c.tensors.emplace_back("config.au", config_tensor({double(m.au.dim), m.au.presence_threshold}));
  Tensor ids({static_cast<int64_t>(m.au.ids.size())});
  for (size_t i = 0; i < m.au.ids.size(); ++i) ids.data[i] = static_cast<float>(m.au.ids[i]);
  c.tensors.emplace_back("config.au_ids", std::move(ids));
  c.tensors.emplace_back("config.emotion", config_tensor({double(m.emotion.num_classes), m.emotion.smoothing}));
  c.tensors.emplace_back("config.eyes", config_tensor({double(m.left_eye), double(m.right_eye)}));
  // 64-bit stage fingerprints as 16-bit chunks, exact in float32
  Tensor stages({3, 4});
  for (size_t s = 0; s < 3; ++s)
    for (size_t k = 0; k < 4; ++k)
      stages.data[s * 4 + k] = static_cast<float>((state.fingerprints[s] >> (16 * k)) & 0xffff);
  c.tensors.emplace_back("config.stages", std::move(stages));
  for (const Param& p : model.params()) c.tensors.emplace_back(p.name, p.value);
  return c;
}

ModelConfig config_from_checkpoint(const Checkpoint& ckpt) {
  ModelConfig m;
  const Tensor& l = need(ckpt, "config.landmark");
  require(l.numel() == 5, ErrorKind::Configuration, "config.landmark must hold 5 values");
  m.landmark = {as_int(l, 0), as_int(l, 1), as_int(l, 2), as_int(l, 3), as_int(l, 4)};
  const Tensor& b = need(ckpt, "config.backbone");
  require(b.numel() == 2, ErrorKind::Configuration, "config.backbone must hold 2 values");
  m.backbone = {as_int(b, 0), as_int(b, 1)};
  const Tensor& a = need(ckpt, "config.au");
  const Tensor& ids = need(ckpt, "config.au_ids");
  require(a.numel() == 2, ErrorKind::Configuration, "config.au must hold 2 values");
  m.au.dim = as_int(a, 0);
  m.au.presence_threshold = a.data[1];
  m.au.ids.clear();
  for (float v : ids.data) m.au.ids.push_back(static_cast<int>(v));
  m.au.num_aus = static_cast<int>(m.au.ids.size());
  const Tensor& e = need(ckpt, "config.emotion");
  require(e.numel() == 2, ErrorKind::Configuration, "config.emotion must hold 2 values");
  m.emotion.num_classes = as_int(e, 0);
  m.emotion.smoothing = e.data[1];
  if (m.emotion.num_classes != static_cast<int>(EmotionConfig{}.class_names.size())) {
    m.emotion.class_names.clear();
    for (int k = 0; k < m.emotion.num_classes; ++k) m.emotion.class_names.push_back("class" + std::to_string(k));
  }
  const Tensor& eyes = need(ckpt, "config.eyes");
  require(eyes.numel() == 2, ErrorKind::Configuration, "config.eyes must hold 2 values");
  m.left_eye = as_int(eyes, 0);
  m.right_eye = as_int(eyes, 1);
  m.validate();
  return m;
}

StageState stage_state_from_checkpoint(const Checkpoint& ckpt) {
  StageState s;
  const Tensor* t = ckpt.find("config.stages");
  if (!t) return s;
  require(t->numel() == 12, ErrorKind::Configuration, "config.stages must hold 12 values");
  for (size_t i = 0; i < 3; ++i)
    for (size_t k = 0; k < 4; ++k)
      s.fingerprints[i] |= static_cast<uint64_t>(t->data[i * 4 + k]) << (16 * k);
  return s;
}

void load_parameters(Model& model, const Checkpoint& ckpt) {
  for (Param& p : model.params()) {
    const Tensor* t = ckpt.find(p.name);
    require(t != nullptr, ErrorKind::Configuration, "checkpoint is missing parameter " + p.name);
    require(t->shape == p.value.shape, ErrorKind::Configuration,
            "shape mismatch for " + p.name + ": checkpoint " + shape_str(t->shape) + ", model " +
                shape_str(p.value.shape));
    p.value.data = t->data;
  }
}

ParameterCount count_parameters(const Checkpoint& ckpt) {
  ParameterCount out;
  for (const auto& [name, t] : ckpt.tensors) {
    if (has_prefix(name, kConfigPrefix)) continue;
    const auto dot = name.find('.');
    out.per_module[name.substr(0, dot)] += t.numel();
    out.total += t.numel();
  }
  return out;
}

}  // namespace mtface
