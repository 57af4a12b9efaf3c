#include "mtface/au.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mtface/error.hpp"
#include "mtface/numerics.hpp"

namespace mtface {

void AUConfig::validate() const {
  require(num_aus >= 2, ErrorKind::Configuration, "au.num_aus must be at least 2");
  require(dim >= 1, ErrorKind::Configuration, "au.dim must be positive");
  require(static_cast<int>(ids.size()) == num_aus, ErrorKind::Configuration,
          "au.ids must list one id per AU");
  require(presence_threshold > 0.0 && presence_threshold < 1.0, ErrorKind::Configuration,
          "au.threshold must lie in (0,1)");
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

AUHead::AUHead(ParamSet& params, const AUConfig& cfg, int input_dim)
    : params_(params), cfg_(cfg), input_dim_(input_dim) {
  cfg_.validate();
  const int n = cfg_.num_aus, d = cfg_.dim;
  params_.add("au.project.weight", {n * d, input_dim});
  params_.add("au.project.bias", {n * d});
  params_.add("au.gcn.weight", {d, d});
  params_.add("au.readout.weight", {n, d});
  params_.add("au.readout.bias", {n});
}

int64_t AUHead::parameter_count(const AUConfig& cfg, int input_dim) {
  ParamSet scratch;
  AUHead head(scratch, cfg, input_dim);
  return scratch.count("au.");
}

void AUHead::init(Rng& rng) {
  fill_normal(params_.at("au.project.weight").value, rng, std::sqrt(1.0 / input_dim_));
  fill_normal(params_.at("au.gcn.weight").value, rng, 0.1 / std::sqrt(cfg_.dim));
  fill_normal(params_.at("au.readout.weight").value, rng, std::sqrt(1.0 / cfg_.dim));
  // positive bias keeps the projected AU vectors away from zero norm
  for (float& b : params_.at("au.project.bias").value.data) b = 0.1f;
  params_.at("au.readout.bias").value.zero();
}

Tape::Var AUHead::forward(Tape& tape, Tape::Var u) {
  const Tensor& uv = tape.value(u);
  require(uv.rank() == 2 && uv.dim(1) == input_dim_, ErrorKind::InvalidInput,
          "au head expects {B," + std::to_string(input_dim_) + "}, got " + shape_str(uv.shape));
  const int64_t b = uv.dim(0);
  auto proj = tape.linear(u, tape.param(params_.at("au.project.weight")),
                          tape.param(params_.at("au.project.bias")));
  auto vecs = tape.reshape(proj, {b, cfg_.num_aus, cfg_.dim});
  auto graph = tape.au_graph(vecs);
  auto updated = tape.gcn(vecs, graph, tape.param(params_.at("au.gcn.weight")));
  return tape.au_readout(updated, tape.param(params_.at("au.readout.weight")),
                         tape.param(params_.at("au.readout.bias")));
}

AUVectors au_project(std::span<const float> u, const ParamSet& params, const AUConfig& cfg) {
  const Tensor& w = params.at("au.project.weight").value;
  const Tensor& bias = params.at("au.project.bias").value;
  require(static_cast<int64_t>(u.size()) == w.dim(1), ErrorKind::InvalidInput,
          "au_project: input dimension " + std::to_string(u.size()) + " does not match " +
              std::to_string(w.dim(1)));
  require(w.dim(0) == static_cast<int64_t>(cfg.num_aus) * cfg.dim, ErrorKind::InvalidInput,
          "au_project: weight rows do not match num_aus * dim");
  const size_t d = static_cast<size_t>(cfg.dim);
  AUVectors out(static_cast<size_t>(cfg.num_aus), std::vector<double>(d));
  for (size_t i = 0; i < out.size(); ++i)
    for (size_t k = 0; k < d; ++k) {
      const size_t row = i * d + k;
      double acc = bias.data[row];
      for (size_t j = 0; j < u.size(); ++j) acc += static_cast<double>(w.data[row * u.size() + j]) * u[j];
      out[i][k] = acc;
    }
  return out;
}

AUGraph build_au_graph(const AUVectors& vectors) {
  const int n = static_cast<int>(vectors.size());
  require(n >= 1, ErrorKind::InvalidInput, "build_au_graph: no vectors");
  for (const auto& v : vectors) {
    double s = 0.0;
    for (double x : v) s += x * x;
    require(s > 0.0, ErrorKind::DegenerateInput, "build_au_graph: zero AU vector");
  }
  AUGraph g;
  g.n = n;
  g.adjacency.assign(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
      const double raw = i == j ? 1.0 : std::max(0.0, cosine_similarity(vectors[i], vectors[j]));
      g.adjacency[static_cast<size_t>(i) * n + j] = raw;
      total += raw;
    }
    for (int j = 0; j < n; ++j) g.adjacency[static_cast<size_t>(i) * n + j] /= total;
  }
  return g;
}

AUVectors gcn_update(const AUVectors& vectors, const AUGraph& graph, const ParamSet& params) {
  const Tensor& w = params.at("au.gcn.weight").value;
  const size_t n = vectors.size();
  require(static_cast<int>(n) == graph.n, ErrorKind::InvalidInput, "gcn_update: graph size mismatch");
  const size_t d = static_cast<size_t>(w.dim(0));
  AUVectors messages(n, std::vector<double>(d, 0.0));
  for (size_t j = 0; j < n; ++j) {
    require(vectors[j].size() == d, ErrorKind::InvalidInput, "gcn_update: vector dimension mismatch");
    for (size_t k = 0; k < d; ++k)
      for (size_t m = 0; m < d; ++m) messages[j][k] += vectors[j][m] * w.data[m * d + k];
  }
  AUVectors out(n, std::vector<double>(d));
  for (size_t i = 0; i < n; ++i)
    for (size_t k = 0; k < d; ++k) {
      double z = vectors[i][k];
      for (size_t j = 0; j < n; ++j) z += graph.at(static_cast<int>(i), static_cast<int>(j)) * messages[j][k];
      out[i][k] = std::max(0.0, z);
    }
  return out;
}

std::vector<double> au_probabilities(const AUVectors& updated, const ParamSet& params) {
  const Tensor& w = params.at("au.readout.weight").value;
  const Tensor& b = params.at("au.readout.bias").value;
  require(static_cast<int64_t>(updated.size()) == w.dim(0), ErrorKind::InvalidInput,
          "au_probabilities: AU count mismatch");
  const size_t d = static_cast<size_t>(w.dim(1));
  std::vector<double> p(updated.size());
  for (size_t i = 0; i < updated.size(); ++i) {
    double z = b.data[i];
    for (size_t k = 0; k < d; ++k) z += static_cast<double>(w.data[i * d + k]) * updated[i][k];
    p[i] = sigmoid(z);
  }
  return p;
}

double weighted_asymmetric_loss(std::span<const double> p, std::span<const int> labels,
                                std::span<const double> weights, std::vector<double>* grad_p) {
  const size_t n = p.size();
  require(n > 0 && labels.size() == n && weights.size() == n, ErrorKind::InvalidInput,
          "weighted_asymmetric_loss: size mismatch");
  if (grad_p) grad_p->assign(n, 0.0);
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const bool clamped = p[i] < kProbClamp || p[i] > 1.0 - kProbClamp;
    const double q = std::clamp(p[i], kProbClamp, 1.0 - kProbClamp);
    const double y = labels[i];
    total += weights[i] * (y * std::log(q) + (1.0 - y) * q * std::log(1.0 - q));
    if (grad_p && !clamped)
      (*grad_p)[i] = -weights[i] / static_cast<double>(n) *
                     (y / q + (1.0 - y) * (std::log(1.0 - q) - q / (1.0 - q)));
  }
  return -total / static_cast<double>(n);
}

double weighted_asymmetric_loss_logits(const Tensor& logits,
                                       const std::vector<std::vector<int>>& labels,
                                       std::span<const double> weights, Tensor* grad) {
  require(logits.rank() == 2 && static_cast<size_t>(logits.dim(0)) == labels.size(),
          ErrorKind::InvalidInput, "au loss: batch size mismatch");
  const int64_t b = logits.dim(0), n = logits.dim(1);
  if (grad) *grad = Tensor(logits.shape);
  double total = 0.0;
  std::vector<double> p(static_cast<size_t>(n)), gp;
  for (int64_t s = 0; s < b; ++s) {
    for (int64_t i = 0; i < n; ++i) p[static_cast<size_t>(i)] = sigmoid(logits.data[s * n + i]);
    total += weighted_asymmetric_loss(p, labels[static_cast<size_t>(s)], weights, grad ? &gp : nullptr);
    if (!grad) continue;
    for (int64_t i = 0; i < n; ++i) {
      const double pi = p[static_cast<size_t>(i)];
      grad->data[s * n + i] = static_cast<float>(gp[static_cast<size_t>(i)] * pi * (1.0 - pi) / b);
    }
  }
  return total / static_cast<double>(b);
}

std::vector<double> compute_au_weights(const std::vector<std::vector<int>>& labels) {
  require(!labels.empty(), ErrorKind::InvalidInput, "compute_au_weights: empty dataset");
  const size_t n = labels.front().size();
  require(n > 0, ErrorKind::InvalidInput, "compute_au_weights: no AUs");
  std::vector<double> counts(n, 0.0);
  for (const auto& row : labels) {
    require(row.size() == n, ErrorKind::InvalidInput, "compute_au_weights: ragged labels");
    for (size_t i = 0; i < n; ++i) counts[i] += row[i] != 0 ? 1.0 : 0.0;
  }
  double total = 0.0;
  for (double& c : counts) {
    c = std::max(c, 1.0);
    total += c;
  }
  std::vector<double> w(n);
  double mean = 0.0;
  for (size_t i = 0; i < n; ++i) {
    w[i] = (total / static_cast<double>(n)) / counts[i];
    mean += w[i];
  }
  mean /= static_cast<double>(n);
  for (double& x : w) x /= mean;
  return w;
}

AUF1 au_f1(const std::vector<std::vector<double>>& probs,
           const std::vector<std::vector<int>>& labels, double threshold) {
  require(probs.size() == labels.size(), ErrorKind::InvalidInput, "au_f1: sample count mismatch");
  AUF1 out;
  if (probs.empty()) return out;
  const size_t n = labels.front().size();
  std::vector<int> tp(n, 0), fp(n, 0), fn(n, 0);
  for (size_t s = 0; s < probs.size(); ++s) {
    require(probs[s].size() == n && labels[s].size() == n, ErrorKind::InvalidInput,
            "au_f1: AU count mismatch");
    for (size_t i = 0; i < n; ++i) {
      const bool pred = probs[s][i] >= threshold;
      const bool truth = labels[s][i] != 0;
      tp[i] += pred && truth;
      fp[i] += pred && !truth;
      fn[i] += !pred && truth;
    }
  }
  for (size_t i = 0; i < n; ++i) {
    double f1 = 0.0;
    if (tp[i] + fp[i] + fn[i] == 0) {
      f1 = 1.0;  // AU absent and never predicted
    } else {
      const double precision = tp[i] + fp[i] > 0 ? static_cast<double>(tp[i]) / (tp[i] + fp[i]) : 0.0;
      const double recall = tp[i] + fn[i] > 0 ? static_cast<double>(tp[i]) / (tp[i] + fn[i]) : 0.0;
      if (precision + recall > 0.0) f1 = 2.0 * precision * recall / (precision + recall);
    }
    out.per_au.push_back(f1);
    out.macro += f1;
  }
  out.macro /= static_cast<double>(n);
  return out;
}

}  // namespace mtface
