#include "mtface/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>

#include "mtface/error.hpp"

namespace mtface {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

struct ConvGeom {
  int64_t c, b, h, w, k, stride, pad, ho, wo;
};

ConvGeom conv_geom(const Shape& xs, int64_t k, int stride, int pad) {
  ConvGeom g{xs[0], xs[1], xs[2], xs[3], k, stride, pad, 0, 0};
  g.ho = (g.h + 2 * pad - k) / stride + 1;
  g.wo = (g.w + 2 * pad - k) / stride + 1;
  return g;
}

bool is_pointwise(const ConvGeom& g) { return g.k == 1 && g.stride == 1 && g.pad == 0; }

// cols: (C*k*k) x (B*Ho*Wo)
void im2col(const float* x, const ConvGeom& g, float* cols) {
  const int64_t plane = g.ho * g.wo;
  const int64_t ncols = g.b * plane;
  for (int64_t c = 0; c < g.c; ++c) {
    for (int64_t ky = 0; ky < g.k; ++ky) {
      for (int64_t kx = 0; kx < g.k; ++kx) {
        float* row = cols + ((c * g.k + ky) * g.k + kx) * ncols;
        for (int64_t b = 0; b < g.b; ++b) {
          const float* src = x + (c * g.b + b) * g.h * g.w;
          float* dst = row + b * plane;
          for (int64_t oy = 0; oy < g.ho; ++oy) {
            const int64_t iy = oy * g.stride - g.pad + ky;
            float* drow = dst + oy * g.wo;
            if (iy < 0 || iy >= g.h) {
              std::fill(drow, drow + g.wo, 0.0f);
              continue;
            }
            const float* srow = src + iy * g.w;
            for (int64_t ox = 0; ox < g.wo; ++ox) {
              const int64_t ix = ox * g.stride - g.pad + kx;
              drow[ox] = (ix >= 0 && ix < g.w) ? srow[ix] : 0.0f;
            }
          }
        }
      }
    }
  }
}

void col2im(const float* cols, const ConvGeom& g, float* dx) {
  const int64_t plane = g.ho * g.wo;
  const int64_t ncols = g.b * plane;
  for (int64_t c = 0; c < g.c; ++c) {
    for (int64_t ky = 0; ky < g.k; ++ky) {
      for (int64_t kx = 0; kx < g.k; ++kx) {
        const float* row = cols + ((c * g.k + ky) * g.k + kx) * ncols;
        for (int64_t b = 0; b < g.b; ++b) {
          float* dst = dx + (c * g.b + b) * g.h * g.w;
          const float* src = row + b * plane;
          for (int64_t oy = 0; oy < g.ho; ++oy) {
            const int64_t iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.h) continue;
            const float* srow = src + oy * g.wo;
            float* drow = dst + iy * g.w;
            for (int64_t ox = 0; ox < g.wo; ++ox) {
              const int64_t ix = ox * g.stride - g.pad + kx;
              if (ix >= 0 && ix < g.w) drow[ix] += srow[ox];
            }
          }
        }
      }
    }
  }
}

void check(bool cond, const std::string& what) { require(cond, ErrorKind::InvalidInput, what); }

}  // namespace

Tape::Var Tape::push(Tensor value, bool requires_grad, std::function<void()> backward) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Var Tape::constant(Tensor t) { return push(std::move(t), false, nullptr); }

Tape::Var Tape::param(Param& p) {
  Node& n = nodes_.emplace_back();
  n.ext_value = &p.value;
  if (p.trainable) {
    if (p.grad.shape != p.value.shape) p.grad = Tensor(p.value.shape);
    n.ext_grad = &p.grad;
    n.requires_grad = true;
  }
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Tape::value(Var v) const {
  const Node& n = nodes_.at(static_cast<size_t>(v.id));
  return n.ext_value ? *n.ext_value : n.value;
}

Tensor& Tape::grad(Var v) {
  Node& n = nodes_.at(static_cast<size_t>(v.id));
  if (n.ext_grad) return *n.ext_grad;
  if (n.grad.shape != value(v).shape) n.grad = Tensor(value(v).shape);
  return n.grad;
}

bool Tape::requires_grad(Var v) const {
  return v.valid() && nodes_.at(static_cast<size_t>(v.id)).requires_grad;
}

bool Tape::has_grad(Var v) const {
  const Node& n = nodes_.at(static_cast<size_t>(v.id));
  return n.ext_grad != nullptr || !n.grad.empty();
}

bool Tape::any_grad(std::initializer_list<Var> vars) const {
  for (Var v : vars)
    if (requires_grad(v)) return true;
  return false;
}

void Tape::backward() {
  for (size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && !n.grad.empty()) n.backward();
  }
}

Tape::Var Tape::conv2d(Var x, Var weight, Var bias, int stride, int pad) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(weight);
  check(xv.rank() == 4 && wv.rank() == 4, "conv2d expects rank-4 input and weight");
  check(wv.dim(1) == xv.dim(0), "conv2d channel mismatch: input " + shape_str(xv.shape) +
                                    " weight " + shape_str(wv.shape));
  check(wv.dim(2) == wv.dim(3), "conv2d kernel must be square");
  const ConvGeom g = conv_geom(xv.shape, wv.dim(2), stride, pad);
  check(g.ho > 0 && g.wo > 0, "conv2d output is empty");
  const int64_t co = wv.dim(0);
  const int64_t kdim = g.c * g.k * g.k;
  const int64_t ncols = g.b * g.ho * g.wo;

  Tensor out({co, g.b, g.ho, g.wo});
  CMapMat wm(wv.ptr(), co, kdim);
  MapMat ym(out.ptr(), co, ncols);
  if (is_pointwise(g)) {
    ym.noalias() = wm * CMapMat(xv.ptr(), kdim, ncols);
  } else {
    std::vector<float> cols(static_cast<size_t>(kdim * ncols));
    im2col(xv.ptr(), g, cols.data());
    ym.noalias() = wm * CMapMat(cols.data(), kdim, ncols);
  }
  if (bias.valid()) {
    const Tensor& bv = value(bias);
    check(bv.numel() == co, "conv2d bias size mismatch");
    for (int64_t o = 0; o < co; ++o) ym.row(o).array() += bv.data[static_cast<size_t>(o)];
  }

  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), any_grad({x, weight, bias}), [this, x, weight, bias, g, co, kdim,
                                                           ncols, out_id] {
    const Tensor& dy = grad(Var{out_id});
    CMapMat dym(dy.ptr(), co, ncols);
    const bool need_cols = requires_grad(weight) && !is_pointwise(g);
    std::vector<float> cols;
    if (need_cols) {
      cols.resize(static_cast<size_t>(kdim * ncols));
      im2col(value(x).ptr(), g, cols.data());
    }
    if (requires_grad(weight)) {
      MapMat dw(grad(weight).ptr(), co, kdim);
      const float* cp = is_pointwise(g) ? value(x).ptr() : cols.data();
      dw.noalias() += dym * CMapMat(cp, kdim, ncols).transpose();
    }
    if (requires_grad(bias)) {
      Tensor& db = grad(bias);
      for (int64_t o = 0; o < co; ++o) db.data[static_cast<size_t>(o)] += dym.row(o).sum();
    }
    if (requires_grad(x)) {
      CMapMat wm(value(weight).ptr(), co, kdim);
      Tensor& dx = grad(x);
      if (is_pointwise(g)) {
        MapMat(dx.ptr(), kdim, ncols).noalias() += wm.transpose() * dym;
      } else {
        std::vector<float> dcols(static_cast<size_t>(kdim * ncols));
        MapMat(dcols.data(), kdim, ncols).noalias() = wm.transpose() * dym;
        col2im(dcols.data(), g, dx.ptr());
      }
    }
  });
}

Tape::Var Tape::relu(Var x) {
  Tensor out = value(x);
  for (float& v : out.data) v = v > 0.0f ? v : 0.0f;
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), requires_grad(x), [this, x, out_id] {
    const Tensor& dy = grad(Var{out_id});
    const Tensor& y = value(Var{out_id});
    Tensor& dx = grad(x);
    for (size_t i = 0; i < dx.data.size(); ++i)
      if (y.data[i] > 0.0f) dx.data[i] += dy.data[i];
  });
}

Tape::Var Tape::add(Var a, Var b) {
  check(value(a).shape == value(b).shape, "add shape mismatch " + shape_str(value(a).shape) +
                                              " vs " + shape_str(value(b).shape));
  Tensor out = value(a);
  const Tensor& bv = value(b);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), any_grad({a, b}), [this, a, b, out_id] {
    const Tensor& dy = grad(Var{out_id});
    for (Var v : {a, b}) {
      if (!requires_grad(v)) continue;
      Tensor& d = grad(v);
      for (size_t i = 0; i < d.data.size(); ++i) d.data[i] += dy.data[i];
    }
  });
}

Tape::Var Tape::avg_pool(Var x, int k) {
  const Tensor& xv = value(x);
  check(xv.rank() == 4, "avg_pool expects {C,B,H,W}");
  const int64_t planes = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  check(k >= 1 && h % k == 0 && w % k == 0, "avg_pool window must divide the map size");
  const int64_t ho = h / k, wo = w / k;
  Tensor out({xv.dim(0), xv.dim(1), ho, wo});
  const float scale = 1.0f / static_cast<float>(k * k);
  for (int64_t p = 0; p < planes; ++p) {
    const float* src = xv.ptr() + p * h * w;
    float* dst = out.ptr() + p * ho * wo;
    for (int64_t y = 0; y < h; ++y)
      for (int64_t xx = 0; xx < w; ++xx) dst[(y / k) * wo + xx / k] += src[y * w + xx];
    for (int64_t i = 0; i < ho * wo; ++i) dst[i] *= scale;
  }
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), requires_grad(x), [this, x, k, planes, h, w, ho, wo, scale, out_id] {
    const Tensor& dy = grad(Var{out_id});
    Tensor& dx = grad(x);
    for (int64_t p = 0; p < planes; ++p) {
      const float* src = dy.ptr() + p * ho * wo;
      float* dst = dx.ptr() + p * h * w;
      for (int64_t y = 0; y < h; ++y)
        for (int64_t xx = 0; xx < w; ++xx) dst[y * w + xx] += scale * src[(y / k) * wo + xx / k];
    }
  });
}

Tape::Var Tape::upsample2(Var x) {
  const Tensor& xv = value(x);
  check(xv.rank() == 4, "upsample2 expects {C,B,H,W}");
  const int64_t planes = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor out({xv.dim(0), xv.dim(1), 2 * h, 2 * w});
  for (int64_t p = 0; p < planes; ++p) {
    const float* src = xv.ptr() + p * h * w;
    float* dst = out.ptr() + p * 4 * h * w;
    for (int64_t y = 0; y < 2 * h; ++y)
      for (int64_t xx = 0; xx < 2 * w; ++xx) dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
  }
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), requires_grad(x), [this, x, planes, h, w, out_id] {
    const Tensor& dy = grad(Var{out_id});
    Tensor& dx = grad(x);
    for (int64_t p = 0; p < planes; ++p) {
      const float* src = dy.ptr() + p * 4 * h * w;
      float* dst = dx.ptr() + p * h * w;
      for (int64_t y = 0; y < 2 * h; ++y)
        for (int64_t xx = 0; xx < 2 * w; ++xx) dst[(y / 2) * w + xx / 2] += src[y * 2 * w + xx];
    }
  });
}

Tape::Var Tape::global_avg_pool(Var x) {
  const Tensor& xv = value(x);
  check(xv.rank() == 4, "global_avg_pool expects {C,B,H,W}");
  const int64_t c = xv.dim(0), b = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  Tensor out({b, c});
  for (int64_t ci = 0; ci < c; ++ci) {
    for (int64_t bi = 0; bi < b; ++bi) {
      const float* src = xv.ptr() + (ci * b + bi) * hw;
      double s = 0.0;
      for (int64_t i = 0; i < hw; ++i) s += src[i];
      out.data[static_cast<size_t>(bi * c + ci)] = static_cast<float>(s / static_cast<double>(hw));
    }
  }
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), requires_grad(x), [this, x, c, b, hw, out_id] {
    const Tensor& dy = grad(Var{out_id});
    Tensor& dx = grad(x);
    const float inv = 1.0f / static_cast<float>(hw);
    for (int64_t ci = 0; ci < c; ++ci)
      for (int64_t bi = 0; bi < b; ++bi) {
        const float g = dy.data[static_cast<size_t>(bi * c + ci)] * inv;
        float* dst = dx.ptr() + (ci * b + bi) * hw;
        for (int64_t i = 0; i < hw; ++i) dst[i] += g;
      }
  });
}

Tape::Var Tape::linear(Var x, Var weight, Var bias) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(weight);
  check(xv.rank() == 2 && wv.rank() == 2, "linear expects {B,D} input and {O,D} weight");
  check(xv.dim(1) == wv.dim(1), "linear dimension mismatch: input " + shape_str(xv.shape) +
                                    " weight " + shape_str(wv.shape));
  const int64_t b = xv.dim(0), d = xv.dim(1), o = wv.dim(0);
  Tensor out({b, o});
  MapMat ym(out.ptr(), b, o);
  ym.noalias() = CMapMat(xv.ptr(), b, d) * CMapMat(wv.ptr(), o, d).transpose();
  if (bias.valid()) {
    const Tensor& bv = value(bias);
    check(bv.numel() == o, "linear bias size mismatch");
    for (int64_t i = 0; i < b; ++i)
      for (int64_t j = 0; j < o; ++j) ym(i, j) += bv.data[static_cast<size_t>(j)];
  }
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), any_grad({x, weight, bias}), [this, x, weight, bias, b, d, o,
                                                           out_id] {
    CMapMat dy(grad(Var{out_id}).ptr(), b, o);
    if (requires_grad(weight))
      MapMat(grad(weight).ptr(), o, d).noalias() += dy.transpose() * CMapMat(value(x).ptr(), b, d);
    if (requires_grad(bias)) {
      Tensor& db = grad(bias);
      for (int64_t j = 0; j < o; ++j) db.data[static_cast<size_t>(j)] += dy.col(j).sum();
    }
    if (requires_grad(x))
      MapMat(grad(x).ptr(), b, d).noalias() += dy * CMapMat(value(weight).ptr(), o, d);
  });
}

Tape::Var Tape::concat_cols(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  check(av.rank() == 2 && bv.rank() == 2 && av.dim(0) == bv.dim(0), "concat_cols shape mismatch");
  const int64_t rows = av.dim(0), da = av.dim(1), db = bv.dim(1);
  Tensor out({rows, da + db});
  for (int64_t r = 0; r < rows; ++r) {
    std::copy_n(av.ptr() + r * da, da, out.ptr() + r * (da + db));
    std::copy_n(bv.ptr() + r * db, db, out.ptr() + r * (da + db) + da);
  }
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), any_grad({a, b}), [this, a, b, rows, da, db, out_id] {
    const Tensor& dy = grad(Var{out_id});
    if (requires_grad(a)) {
      Tensor& ga = grad(a);
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < da; ++j) ga.data[r * da + j] += dy.data[r * (da + db) + j];
    }
    if (requires_grad(b)) {
      Tensor& gb = grad(b);
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < db; ++j) gb.data[r * db + j] += dy.data[r * (da + db) + da + j];
    }
  });
}

Tape::Var Tape::reshape(Var x, Shape shape) {
  Tensor out = value(x);
  check(shape_numel(shape) == out.numel(), "reshape element count mismatch");
  out.shape = std::move(shape);
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), requires_grad(x), [this, x, out_id] {
    const Tensor& dy = grad(Var{out_id});
    Tensor& dx = grad(x);
    for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dy.data[i];
  });
}

Tape::Var Tape::au_graph(Var u) {
  const Tensor& uv = value(u);
  check(uv.rank() == 3, "au_graph expects {B,N,d}");
  const int64_t b = uv.dim(0), n = uv.dim(1), d = uv.dim(2);
  Tensor out({b, n, n});
  // cached per-sample norms and raw cosines for the backward pass
  auto norms = std::make_shared<std::vector<double>>(static_cast<size_t>(b * n));
  auto cosines = std::make_shared<std::vector<double>>(static_cast<size_t>(b * n * n));
  auto row_sums = std::make_shared<std::vector<double>>(static_cast<size_t>(b * n));
  for (int64_t s = 0; s < b; ++s) {
    const float* us = uv.ptr() + s * n * d;
    for (int64_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int64_t k = 0; k < d; ++k) acc += static_cast<double>(us[i * d + k]) * us[i * d + k];
      (*norms)[s * n + i] = std::sqrt(acc);
    }
    for (int64_t i = 0; i < n; ++i) {
      double total = 0.0;
      for (int64_t j = 0; j < n; ++j) {
        double raw = 1.0;
        if (i != j) {
          const double ni = (*norms)[s * n + i], nj = (*norms)[s * n + j];
          double c = 0.0;
          if (ni > 0.0 && nj > 0.0) {
            double dot = 0.0;
            for (int64_t k = 0; k < d; ++k) dot += static_cast<double>(us[i * d + k]) * us[j * d + k];
            c = std::clamp(dot / (ni * nj), -1.0, 1.0);
          }
          (*cosines)[(s * n + i) * n + j] = c;
          raw = std::max(0.0, c);
        }
        out.data[(s * n + i) * n + j] = static_cast<float>(raw);
        total += raw;
      }
      (*row_sums)[s * n + i] = total;
      for (int64_t j = 0; j < n; ++j)
        out.data[(s * n + i) * n + j] = static_cast<float>(out.data[(s * n + i) * n + j] / total);
    }
  }
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), requires_grad(u), [this, u, b, n, d, norms, cosines, row_sums,
                                                 out_id] {
    const Tensor& da = grad(Var{out_id});
    const Tensor& a = value(Var{out_id});
    const Tensor& uv = value(u);
    Tensor& du = grad(u);
    for (int64_t s = 0; s < b; ++s) {
      const float* us = uv.ptr() + s * n * d;
      float* dus = du.ptr() + s * n * d;
      for (int64_t i = 0; i < n; ++i) {
        double inner = 0.0;
        for (int64_t k = 0; k < n; ++k)
          inner += static_cast<double>(da.data[(s * n + i) * n + k]) * a.data[(s * n + i) * n + k];
        const double ri = (*row_sums)[s * n + i];
        const double ni = (*norms)[s * n + i];
        for (int64_t j = 0; j < n; ++j) {
          if (i == j) continue;
          const double c = (*cosines)[(s * n + i) * n + j];
          const double nj = (*norms)[s * n + j];
          if (c <= 0.0 || ni == 0.0 || nj == 0.0) continue;
          const double gc = (da.data[(s * n + i) * n + j] - inner) / ri;
          for (int64_t k = 0; k < d; ++k) {
            const double ui = us[i * d + k], uj = us[j * d + k];
            dus[i * d + k] += static_cast<float>(gc * (uj / (ni * nj) - c * ui / (ni * ni)));
            dus[j * d + k] += static_cast<float>(gc * (ui / (ni * nj) - c * uj / (nj * nj)));
          }
        }
      }
    }
  });
}

Tape::Var Tape::gcn(Var u, Var adj, Var wg) {
  const Tensor& uv = value(u);
  const Tensor& av = value(adj);
  const Tensor& wv = value(wg);
  check(uv.rank() == 3 && av.rank() == 3 && wv.rank() == 2, "gcn expects {B,N,d},{B,N,N},{d,d}");
  const int64_t b = uv.dim(0), n = uv.dim(1), d = uv.dim(2);
  check(av.dim(0) == b && av.dim(1) == n && av.dim(2) == n, "gcn adjacency shape mismatch");
  check(wv.dim(0) == d && wv.dim(1) == d, "gcn weight shape mismatch");
  Tensor out({b, n, d});
  auto messages = std::make_shared<Tensor>(Shape{b, n, d});
  CMapMat wm(wv.ptr(), d, d);
  for (int64_t s = 0; s < b; ++s) {
    CMapMat us(uv.ptr() + s * n * d, n, d);
    MapMat ms(messages->ptr() + s * n * d, n, d);
    ms.noalias() = us * wm;
    MapMat zs(out.ptr() + s * n * d, n, d);
    zs.noalias() = CMapMat(av.ptr() + s * n * n, n, n) * ms;
    zs += us;
  }
  auto pre = std::make_shared<Tensor>(out);
  for (float& v : out.data) v = v > 0.0f ? v : 0.0f;
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), any_grad({u, adj, wg}), [this, u, adj, wg, b, n, d, messages, pre,
                                                       out_id] {
    Tensor dz = grad(Var{out_id});
    for (size_t i = 0; i < dz.data.size(); ++i)
      if (pre->data[i] <= 0.0f) dz.data[i] = 0.0f;
    std::vector<float> dm(static_cast<size_t>(n * d));
    for (int64_t s = 0; s < b; ++s) {
      CMapMat dzs(dz.ptr() + s * n * d, n, d);
      CMapMat as(value(adj).ptr() + s * n * n, n, n);
      if (requires_grad(adj))
        MapMat(grad(adj).ptr() + s * n * n, n, n).noalias() +=
            dzs * CMapMat(messages->ptr() + s * n * d, n, d).transpose();
      MapMat dms(dm.data(), n, d);
      dms.noalias() = as.transpose() * dzs;
      if (requires_grad(wg))
        MapMat(grad(wg).ptr(), d, d).noalias() +=
            CMapMat(value(u).ptr() + s * n * d, n, d).transpose() * dms;
      if (requires_grad(u)) {
        MapMat dus(grad(u).ptr() + s * n * d, n, d);
        dus.noalias() += dms * CMapMat(value(wg).ptr(), d, d).transpose();
        dus += dzs;
      }
    }
  });
}

Tape::Var Tape::au_readout(Var u, Var weight, Var bias) {
  const Tensor& uv = value(u);
  const Tensor& wv = value(weight);
  const Tensor& bv = value(bias);
  check(uv.rank() == 3, "au_readout expects {B,N,d}");
  const int64_t b = uv.dim(0), n = uv.dim(1), d = uv.dim(2);
  check(wv.rank() == 2 && wv.dim(0) == n && wv.dim(1) == d && bv.numel() == n,
        "au_readout parameter shape mismatch");
  Tensor out({b, n});
  for (int64_t s = 0; s < b; ++s)
    for (int64_t i = 0; i < n; ++i) {
      float acc = bv.data[static_cast<size_t>(i)];
      for (int64_t k = 0; k < d; ++k) acc += wv.data[i * d + k] * uv.data[(s * n + i) * d + k];
      out.data[s * n + i] = acc;
    }
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), any_grad({u, weight, bias}), [this, u, weight, bias, b, n, d,
                                                           out_id] {
    const Tensor& dy = grad(Var{out_id});
    for (int64_t s = 0; s < b; ++s)
      for (int64_t i = 0; i < n; ++i) {
        const float g = dy.data[s * n + i];
        if (requires_grad(bias)) grad(bias).data[static_cast<size_t>(i)] += g;
        if (requires_grad(weight)) {
          float* dw = grad(weight).ptr() + i * d;
          const float* us = value(u).ptr() + (s * n + i) * d;
          for (int64_t k = 0; k < d; ++k) dw[k] += g * us[k];
        }
        if (requires_grad(u)) {
          float* du = grad(u).ptr() + (s * n + i) * d;
          const float* w = value(weight).ptr() + i * d;
          for (int64_t k = 0; k < d; ++k) du[k] += g * w[k];
        }
      }
  });
}

}  // namespace mtface
