#pragma once

#include <deque>
#include <functional>

#include "mtface/tensor.hpp"

namespace mtface {

// Reverse-mode tape over float tensors. Each op records a closure that pushes
// the output gradient back to its inputs; `backward` runs them in reverse.
// Parameter nodes alias the Param's storage so gradients accumulate in place.
// Frozen parameters (trainable == false) never receive gradient.
class Tape {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  Var constant(Tensor t);
  Var param(Param& p);

  const Tensor& value(Var v) const;
  Tensor& grad(Var v);
  bool requires_grad(Var v) const;
  bool has_grad(Var v) const;

  void backward();
  size_t size() const { return nodes_.size(); }

  // Feature maps are {C, B, H, W}; weights {Co, Ci, k, k}; `bias` may be invalid.
  Var conv2d(Var x, Var weight, Var bias, int stride, int pad);
  Var relu(Var x);
  Var add(Var a, Var b);
  Var avg_pool(Var x, int k);
  Var upsample2(Var x);
  // {C, B, H, W} -> {B, C}
  Var global_avg_pool(Var x);
  // {B, D} x {O, D} (+ {O}) -> {B, O}
  Var linear(Var x, Var weight, Var bias);
  Var concat_cols(Var a, Var b);
  Var reshape(Var x, Shape shape);
  // {B, N, d} -> {B, N, N}: clamped cosine similarity, unit diagonal, row-normalized.
  // A zero-norm vector contributes no edges.
  Var au_graph(Var u);
  // relu(A (U Wg) + U) per sample.
  Var gcn(Var u, Var adj, Var wg);
  // {B, N, d} with per-row weights {N, d} and bias {N} -> {B, N}
  Var au_readout(Var u, Var weight, Var bias);

 private:
  struct Node {
    Tensor value;
    const Tensor* ext_value = nullptr;
    Tensor grad;
    Tensor* ext_grad = nullptr;
    bool requires_grad = false;
    std::function<void()> backward;
  };

  Var push(Tensor value, bool requires_grad, std::function<void()> backward);
  bool any_grad(std::initializer_list<Var> vars) const;

  std::deque<Node> nodes_;
};

}  // namespace mtface
