#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtface/tensor.hpp"

namespace mtface {

// 8-bit interleaved RGB image.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> rgb;

  Image() = default;
  Image(int w, int h, uint8_t fill = 0)
      : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3, fill) {}

  uint8_t* pixel(int x, int y) { return rgb.data() + (static_cast<size_t>(y) * width + x) * 3; }
  const uint8_t* pixel(int x, int y) const {
    return rgb.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
};

// Binary PGM (P5, expanded to RGB) or PPM (P6), maxval 255.
Image read_image(const std::string& path);
std::vector<uint8_t> encode_ppm(const Image& img);
void write_ppm(const Image& img, const std::string& path);

// {3, H, W} float tensor scaled to [0, 1].
Tensor to_tensor(const Image& img);

}  // namespace mtface
