#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mtface/error.hpp"
#include "mtface/numerics.hpp"
#include "mtface/params.hpp"
#include "mtface/tensor.hpp"

namespace testutil {

inline std::vector<double> random_vector(mtface::Rng& rng, size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline mtface::Tensor random_tensor(mtface::Rng& rng, mtface::Shape shape, double scale = 1.0) {
  mtface::Tensor t(std::move(shape));
  for (float& x : t.data) x = static_cast<float>(scale * rng.uniform(-1.0, 1.0));
  return t;
}

// Worst relative error of `analytic` against central differences of f.
inline double max_fd_error(const std::function<double(std::span<const double>)>& f, std::span<const double> x,
                           std::span<const double> analytic, double eps = 1e-6, double floor = 1e-6) {
  const auto fd = mtface::finite_diff_gradient(f, x, eps);
  double worst = 0.0;
  for (size_t i = 0; i < fd.size(); ++i) worst = std::max(worst, mtface::relative_error(analytic[i], fd[i], floor));
  return worst;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("mtface_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

template <typename Fn>
mtface::ErrorKind error_kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const mtface::Error& e) {
    return e.kind();
  }
  throw std::runtime_error("expected an mtface::Error");
}

}  // namespace testutil
