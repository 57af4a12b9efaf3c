#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "mtface/tensor.hpp"

namespace mtface {

// Ordered collection of named parameters with stable addresses.
class ParamSet {
 public:
  Param& add(std::string name, Shape shape);
  Param* find(std::string_view name);
  const Param* find(std::string_view name) const;
  Param& at(std::string_view name);
  const Param& at(std::string_view name) const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  size_t size() const { return params_.size(); }

  void zero_grad();
  void set_trainable(std::string_view prefix, bool trainable);
  int64_t count(std::string_view prefix = {}) const;

 private:
  std::deque<Param> params_;
};

bool has_prefix(std::string_view name, std::string_view prefix);

// 64-bit FNV-1a over names, shapes and raw bytes of every parameter under `prefix`.
uint64_t fingerprint(const ParamSet& params, std::string_view prefix);
std::string fingerprint_hex(uint64_t fp);

// mt19937_64 with a portable Box-Muller normal so seeded draws match across
// standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  uint64_t below(uint64_t n);  // [0, n)
  uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

void fill_normal(Tensor& t, Rng& rng, double stddev);

// Fisher-Yates permutation of [0, n).
std::vector<size_t> permutation(size_t n, Rng& rng);

uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b = 0);

}  // namespace mtface
