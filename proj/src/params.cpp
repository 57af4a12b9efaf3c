#include "mtface/params.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>

#include "mtface/error.hpp"

namespace mtface {

bool has_prefix(std::string_view name, std::string_view prefix) {
  return name.substr(0, prefix.size()) == prefix;
}

Param& ParamSet::add(std::string name, Shape shape) {
  require(find(name) == nullptr, ErrorKind::Configuration, "duplicate parameter name " + name);
  return params_.emplace_back(std::move(name), std::move(shape));
}

Param* ParamSet::find(std::string_view name) {
  for (Param& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

const Param* ParamSet::find(std::string_view name) const {
  for (const Param& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

Param& ParamSet::at(std::string_view name) {
  Param* p = find(name);
  require(p != nullptr, ErrorKind::Configuration, "missing parameter " + std::string(name));
  return *p;
}

const Param& ParamSet::at(std::string_view name) const {
  const Param* p = find(name);
  require(p != nullptr, ErrorKind::Configuration, "missing parameter " + std::string(name));
  return *p;
}

void ParamSet::zero_grad() {
  for (Param& p : params_) p.zero_grad();
}

void ParamSet::set_trainable(std::string_view prefix, bool trainable) {
  for (Param& p : params_)
    if (has_prefix(p.name, prefix)) p.trainable = trainable;
}

int64_t ParamSet::count(std::string_view prefix) const {
  int64_t n = 0;
  for (const Param& p : params_)
    if (has_prefix(p.name, prefix)) n += p.value.numel();
  return n;
}

uint64_t fingerprint(const ParamSet& params, std::string_view prefix) {
  uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](const void* data, size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const Param& p : params) {
    if (!has_prefix(p.name, prefix)) continue;
    feed(p.name.data(), p.name.size());
    for (int64_t d : p.value.shape) feed(&d, sizeof d);
    feed(p.value.ptr(), p.value.data.size() * sizeof(float));
  }
  return h;
}

std::string fingerprint_hex(uint64_t fp) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
  has_spare_ = true;
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

uint64_t Rng::below(uint64_t n) { return n == 0 ? 0 : engine_() % n; }

void fill_normal(Tensor& t, Rng& rng, double stddev) {
  for (float& v : t.data) v = static_cast<float>(rng.normal() * stddev);
}

std::vector<size_t> permutation(size_t n, Rng& rng) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  for (size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b) {
  // splitmix64 finalizer over the combined words
  uint64_t z = seed ^ (a * 0x9E3779B97F4A7C15ULL) ^ (b * 0xC2B2AE3D27D4EB4FULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace mtface
