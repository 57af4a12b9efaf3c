#include "mtface/image.hpp"

#include <cctype>
#include <fstream>
#include <iterator>

#include "mtface/error.hpp"

namespace mtface {

namespace {

int read_header_int(const std::vector<uint8_t>& buf, size_t& pos, const std::string& path) {
  while (pos < buf.size()) {
    if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(buf[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  require(pos < buf.size() && std::isdigit(buf[pos]), ErrorKind::Data, "malformed PNM header in " + path);
  int v = 0;
  while (pos < buf.size() && std::isdigit(buf[pos])) {
    v = v * 10 + (buf[pos] - '0');
    require(v <= 1 << 20, ErrorKind::Data, "PNM dimension too large in " + path);
    ++pos;
  }
  return v;
}

}  // namespace

Image read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::Io, "cannot open image " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(buf.size() >= 2 && buf[0] == 'P' && (buf[1] == '5' || buf[1] == '6'), ErrorKind::Data,
          "unsupported image format (need binary PGM/PPM): " + path);
  const bool color = buf[1] == '6';
  size_t pos = 2;
  const int w = read_header_int(buf, pos, path);
  const int h = read_header_int(buf, pos, path);
  const int maxval = read_header_int(buf, pos, path);
  require(w > 0 && h > 0 && maxval == 255, ErrorKind::Data, "unsupported PNM geometry/maxval in " + path);
  ++pos;  // single whitespace before the raster
  const size_t channels = color ? 3 : 1;
  const size_t need = static_cast<size_t>(w) * h * channels;
  require(buf.size() >= pos + need, ErrorKind::Data, "truncated image raster in " + path);
  Image img(w, h);
  if (color) {
    std::copy_n(buf.begin() + static_cast<std::ptrdiff_t>(pos), need, img.rgb.begin());
  } else {
    for (size_t i = 0; i < need; ++i) img.rgb[3 * i] = img.rgb[3 * i + 1] = img.rgb[3 * i + 2] = buf[pos + i];
  }
  return img;
}

std::vector<uint8_t> encode_ppm(const Image& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.rgb.begin(), img.rgb.end());
  return out;
}

void write_ppm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::Io, "cannot write image " + path);
  const auto bytes = encode_ppm(img);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorKind::Io, "failed writing " + path);
}

Tensor to_tensor(const Image& img) {
  Tensor t({3, img.height, img.width});
  const size_t plane = static_cast<size_t>(img.width) * img.height;
  for (size_t i = 0; i < plane; ++i)
    for (size_t c = 0; c < 3; ++c) t.data[c * plane + i] = img.rgb[3 * i + c] / 255.0f;
  return t;
}

}  // namespace mtface
