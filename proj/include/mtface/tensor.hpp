#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mtface {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense float32 tensor, row-major. Feature maps inside the network use the
// channel-major {C, B, H, W} layout so a convolution is a single GEMM.
struct Tensor {
  Shape shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(Shape s, float fill = 0.0f)
      : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), fill) {}

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t dim(size_t i) const { return shape.at(i); }
  size_t rank() const { return shape.size(); }
  bool empty() const { return data.empty(); }

  float* ptr() { return data.data(); }
  const float* ptr() const { return data.data(); }
  std::span<float> span() { return data; }
  std::span<const float> span() const { return data; }

  void zero();
  void reshape(Shape s);
};

// A named trainable tensor with its gradient accumulator.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Param() = default;
  Param(std::string n, Shape s)
      : name(std::move(n)), value(s), grad(s) {}

  void zero_grad() { grad.zero(); }
};

}  // namespace mtface
