#pragma once

#include <array>
#include <functional>
#include <span>
#include <vector>

namespace mtface {

using Vec2 = std::array<double, 2>;

// H x W grid of activations, row-major. Coordinates are (x, y) = (column, row)
// with the origin at the top-left cell.
class Heatmap {
 public:
  Heatmap() = default;
  Heatmap(int height, int width, double fill = 0.0);
  Heatmap(int height, int width, std::vector<double> values);

  int height() const { return h_; }
  int width() const { return w_; }
  size_t size() const { return values_.size(); }

  double& at(int row, int col) { return values_[static_cast<size_t>(row) * w_ + col]; }
  double at(int row, int col) const { return values_[static_cast<size_t>(row) * w_ + col]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

 private:
  int h_ = 0;
  int w_ = 0;
  std::vector<double> values_;
};

struct HeatmapStats {
  Vec2 mu{};
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  Vec2 v1{1.0, 0.0};
  Vec2 v2{0.0, 1.0};
};

inline constexpr double kEigenFloor = 1e-5;
inline constexpr double kNormalizationTol = 1e-6;

Heatmap spatial_softmax(const Heatmap& h, double temperature = 1.0);
// Plain sum normalization; entries must be non-negative with a positive sum.
Heatmap sum_normalize(const Heatmap& h);

Vec2 soft_argmax(const Heatmap& p);

// Eigenvalues are floored at `floor`; pass 0 to get the raw spectrum.
HeatmapStats heatmap_pca(const Heatmap& p, const Vec2& mu, double floor = kEigenFloor);

// Closed-form eigen decomposition of [[a, b], [b, c]], eigenvalues descending.
void symmetric_eigen2(double a, double b, double c, double& l1, double& l2, Vec2& v1, Vec2& v2);

double cosine_similarity(std::span<const double> u, std::span<const double> v);
double cosine_similarity(std::span<const float> u, std::span<const float> v);

std::vector<double> finite_diff_gradient(const std::function<double(std::span<const double>)>& f,
                                         std::span<const double> x, double eps);

double relative_error(double a, double b, double abs_floor = 1e-8);

}  // namespace mtface
