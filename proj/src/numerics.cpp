#include "mtface/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mtface/error.hpp"

namespace mtface {

namespace {

void check_shape(int h, int w) {
  require(h >= 2 && w >= 2, ErrorKind::InvalidInput,
          "heatmap must be at least 2x2, got " + std::to_string(h) + "x" + std::to_string(w));
}

void check_normalized(const Heatmap& p) {
  double total = 0.0;
  for (double v : p.values()) {
    require(std::isfinite(v) && v >= 0.0, ErrorKind::InvalidInput,
            "probability heatmap has a negative or non-finite entry");
    total += v;
  }
  require(std::abs(total - 1.0) <= kNormalizationTol, ErrorKind::InvalidInput,
          "probability heatmap sums to " + std::to_string(total) + ", expected 1");
}

}  // namespace

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::DegenerateInput: return "degenerate-input";
    case ErrorKind::Configuration: return "configuration";
    case ErrorKind::Io: return "io";
    case ErrorKind::Data: return "data";
    case ErrorKind::Training: return "training-abort";
    case ErrorKind::StageOrder: return "stage-order";
    case ErrorKind::Integrity: return "integrity";
    case ErrorKind::BadMagic: return "bad-magic";
    case ErrorKind::BadVersion: return "bad-version";
    case ErrorKind::CrcMismatch: return "crc-mismatch";
    case ErrorKind::Truncated: return "truncated";
  }
  return "unknown";
}

Heatmap::Heatmap(int height, int width, double fill) : h_(height), w_(width) {
  check_shape(height, width);
  values_.assign(static_cast<size_t>(height) * width, fill);
}

Heatmap::Heatmap(int height, int width, std::vector<double> values)
    : h_(height), w_(width), values_(std::move(values)) {
  check_shape(height, width);
  require(values_.size() == static_cast<size_t>(height) * width, ErrorKind::InvalidInput,
          "heatmap value count does not match its shape");
}

Heatmap spatial_softmax(const Heatmap& h, double temperature) {
  require(temperature > 0.0 && std::isfinite(temperature), ErrorKind::InvalidInput,
          "softmax temperature must be positive");
  double peak = -INFINITY;
  for (double v : h.values()) {
    require(std::isfinite(v), ErrorKind::InvalidInput, "heatmap has a non-finite entry");
    peak = std::max(peak, v);
  }
  Heatmap out(h.height(), h.width());
  auto dst = out.values();
  auto src = h.values();
  double total = 0.0;
  for (size_t i = 0; i < src.size(); ++i) {
    dst[i] = std::exp((src[i] - peak) / temperature);
    total += dst[i];
  }
  for (double& v : dst) v /= total;
  return out;
}

Heatmap sum_normalize(const Heatmap& h) {
  double total = 0.0;
  for (double v : h.values()) {
    require(std::isfinite(v) && v >= 0.0, ErrorKind::InvalidInput,
            "sum normalization needs finite non-negative entries");
    total += v;
  }
  require(total > 0.0, ErrorKind::DegenerateInput, "heatmap has zero total mass");
  Heatmap out = h;
  for (double& v : out.values()) v /= total;
  return out;
}

Vec2 soft_argmax(const Heatmap& p) {
  check_normalized(p);
  double x = 0.0, y = 0.0;
  for (int r = 0; r < p.height(); ++r) {
    for (int c = 0; c < p.width(); ++c) {
      const double m = p.at(r, c);
      x += m * c;
      y += m * r;
    }
  }
  return {x, y};
}

void symmetric_eigen2(double a, double b, double c, double& l1, double& l2, Vec2& v1, Vec2& v2) {
  const double mean = 0.5 * (a + c);
  const double half_diff = 0.5 * (a - c);
  const double radius = std::hypot(half_diff, b);
  l1 = mean + radius;
  l2 = mean - radius;
  const double theta = 0.5 * std::atan2(2.0 * b, a - c);
  v1 = {std::cos(theta), std::sin(theta)};
  v2 = {-std::sin(theta), std::cos(theta)};
}

HeatmapStats heatmap_pca(const Heatmap& p, const Vec2& mu, double floor) {
  check_normalized(p);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (int r = 0; r < p.height(); ++r) {
    const double dy = r - mu[1];
    for (int c = 0; c < p.width(); ++c) {
      const double m = p.at(r, c);
      const double dx = c - mu[0];
      sxx += m * dx * dx;
      sxy += m * dx * dy;
      syy += m * dy * dy;
    }
  }
  HeatmapStats s;
  s.mu = mu;
  symmetric_eigen2(sxx, sxy, syy, s.lambda1, s.lambda2, s.v1, s.v2);
  s.lambda1 = std::max(s.lambda1, floor);
  s.lambda2 = std::max(s.lambda2, floor);
  return s;
}

namespace {

template <typename T>
double cosine_impl(std::span<const T> u, std::span<const T> v) {
  require(u.size() == v.size(), ErrorKind::InvalidInput, "cosine similarity of unequal lengths");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (size_t i = 0; i < u.size(); ++i) {
    dot += static_cast<double>(u[i]) * v[i];
    nu += static_cast<double>(u[i]) * u[i];
    nv += static_cast<double>(v[i]) * v[i];
  }
  require(nu > 0.0 && nv > 0.0, ErrorKind::DegenerateInput, "cosine similarity of a zero vector");
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

}  // namespace

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  return cosine_impl(u, v);
}

double cosine_similarity(std::span<const float> u, std::span<const float> v) {
  return cosine_impl(u, v);
}

std::vector<double> finite_diff_gradient(const std::function<double(std::span<const double>)>& f,
                                         std::span<const double> x, double eps) {
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = f(probe);
    probe[i] = orig - eps;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

double relative_error(double a, double b, double abs_floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), abs_floor});
}

}  // namespace mtface
