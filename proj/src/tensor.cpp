#include "mtface/tensor.hpp"

#include <algorithm>

#include "mtface/error.hpp"

namespace mtface {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    require(d >= 0, ErrorKind::InvalidInput, "negative tensor dimension");
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "{";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "}";
}

void Tensor::zero() { std::fill(data.begin(), data.end(), 0.0f); }

void Tensor::reshape(Shape s) {
  require(shape_numel(s) == numel(), ErrorKind::InvalidInput,
          "cannot reshape " + shape_str(shape) + " to " + shape_str(s));
  shape = std::move(s);
}

}  // namespace mtface
