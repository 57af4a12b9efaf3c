#pragma once

#include <span>
#include <vector>

#include "mtface/autograd.hpp"
#include "mtface/params.hpp"

namespace mtface {

struct AUConfig {
  int num_aus = 12;
  int dim = 64;
  double presence_threshold = 0.5;
  std::vector<int> ids{1, 2, 4, 5, 6, 9, 12, 15, 17, 20, 25, 26};

  void validate() const;
};

using AUVectors = std::vector<std::vector<double>>;

struct AUGraph {
  int n = 0;
  std::vector<double> adjacency;  // row-major n x n

  double at(int i, int j) const { return adjacency[static_cast<size_t>(i) * n + j]; }
};

// Per-AU projections, similarity graph, one residual GCN layer and sigmoid
// readout. Parameters live under "au.".
class AUHead {
 public:
  AUHead(ParamSet& params, const AUConfig& cfg, int input_dim);

  const AUConfig& config() const { return cfg_; }
  int input_dim() const { return input_dim_; }
  void init(Rng& rng);

  // u {B, D} -> logits {B, N_au}
  Tape::Var forward(Tape& tape, Tape::Var u);

  static int64_t parameter_count(const AUConfig& cfg, int input_dim);

 private:
  ParamSet& params_;
  AUConfig cfg_;
  int input_dim_;
};

// Reference single-sample forms in double precision.
AUVectors au_project(std::span<const float> u, const ParamSet& params, const AUConfig& cfg);
AUGraph build_au_graph(const AUVectors& vectors);
AUVectors gcn_update(const AUVectors& vectors, const AUGraph& graph, const ParamSet& params);
std::vector<double> au_probabilities(const AUVectors& updated, const ParamSet& params);

inline constexpr double kProbClamp = 1e-7;

// L = -(1/N) sum_i w_i [y_i log p_i + (1 - y_i) p_i log(1 - p_i)]
double weighted_asymmetric_loss(std::span<const double> p, std::span<const int> labels,
                                std::span<const double> weights,
                                std::vector<double>* grad_p = nullptr);

// Batched over logits {B, N_au}; mean over samples. grad is dL/dlogit.
double weighted_asymmetric_loss_logits(const Tensor& logits,
                                       const std::vector<std::vector<int>>& labels,
                                       std::span<const double> weights, Tensor* grad);

std::vector<double> compute_au_weights(const std::vector<std::vector<int>>& labels);

struct AUF1 {
  std::vector<double> per_au;
  double macro = 0.0;
};

AUF1 au_f1(const std::vector<std::vector<double>>& probs,
           const std::vector<std::vector<int>>& labels, double threshold = 0.5);

double sigmoid(double z);

}  // namespace mtface
