#include "mtface/landmark.hpp"

#include <cmath>
#include <string>

#include "mtface/error.hpp"

namespace mtface {

void LandmarkConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorKind::Configuration, "landmark config: " + what); };
  if (num_landmarks < 1) bad("num_landmarks must be positive");
  if (num_stacks < 1) bad("num_stacks must be at least 1");
  if (channels < 1) bad("channels must be positive");
  if (heatmap_size < 8) bad("heatmap_size must be at least 8");
  if (input_size < heatmap_size || input_size % heatmap_size != 0)
    bad("input_size must be a multiple of heatmap_size");
  int s = heatmap_size;
  while (s > 4 && s % 2 == 0) s /= 2;
  if (s != 4) bad("heatmap_size must be 4 * 2^k");
}

int LandmarkConfig::depth() const {
  int d = 0;
  for (int s = heatmap_size; s > 4; s /= 2) ++d;
  return d;
}

HourglassNet::HourglassNet(ParamSet& params, const LandmarkConfig& cfg) : params_(params), cfg_(cfg) {
  cfg_.validate();
  const int c = cfg_.channels, n = cfg_.num_landmarks;
  stem_ = add_conv("landmark.stem.conv", c, 3, 3);
  stem_res_ = add_residual("landmark.stem.res");
  for (int s = 0; s < cfg_.num_stacks; ++s) {
    const std::string base = "landmark.hg" + std::to_string(s);
    auto& levels = levels_.emplace_back();
    for (int level = 1; level <= cfg_.depth(); ++level) {
      const std::string lb = base + ".l" + std::to_string(level);
      levels.push_back({add_residual(lb + ".up1"), add_residual(lb + ".low1"),
                        add_residual(lb + ".low3")});
    }
    bottom_.push_back(add_residual(base + ".l1.low2"));
    feat_.push_back(add_conv(base + ".feat", c, c, 1));
    heat_.push_back(add_conv(base + ".heat", n, c, 1));
    if (s + 1 < cfg_.num_stacks) {
      merge_feat_.push_back(add_conv(base + ".merge_feat", c, c, 1));
      merge_heat_.push_back(add_conv(base + ".merge_heat", c, n, 1));
    }
  }
}

int64_t HourglassNet::parameter_count(const LandmarkConfig& cfg) {
  ParamSet scratch;
  HourglassNet net(scratch, cfg);
  return scratch.count("landmark.");
}

HourglassNet::Conv HourglassNet::add_conv(const std::string& name, int cout, int cin, int k) {
  Conv conv;
  conv.weight = &params_.add(name + ".weight", {cout, cin, k, k});
  conv.bias = &params_.add(name + ".bias", {cout});
  return conv;
}

HourglassNet::Residual HourglassNet::add_residual(const std::string& name) {
  const int c = cfg_.channels;
  return {add_conv(name + ".conv1", c, c, 3), add_conv(name + ".conv2", c, c, 3)};
}

void HourglassNet::init(Rng& rng) {
  for (Param& p : params_) {
    if (!has_prefix(p.name, "landmark.")) continue;
    if (p.value.rank() != 4) {
      p.value.zero();
      continue;
    }
    const double fan_in = static_cast<double>(p.value.dim(1) * p.value.dim(2) * p.value.dim(3));
    double stddev = std::sqrt(2.0 / fan_in);
    // residual branches start close to identity
    if (p.name.find(".conv2.") != std::string::npos) stddev *= 0.1;
    if (p.name.find(".heat.") != std::string::npos) stddev = 0.01;
    fill_normal(p.value, rng, stddev);
  }
}

Tape::Var HourglassNet::apply(Tape& tape, const Conv& c, Tape::Var x, int stride, int pad) {
  return tape.conv2d(x, tape.param(*c.weight), tape.param(*c.bias), stride, pad);
}

Tape::Var HourglassNet::apply(Tape& tape, const Residual& r, Tape::Var x) {
  auto h = tape.relu(apply(tape, r.conv1, x, 1, 1));
  return tape.add(x, apply(tape, r.conv2, h, 1, 1));
}

Tape::Var HourglassNet::hourglass(Tape& tape, int stack, int level, Tape::Var x) {
  const auto& blocks = levels_[static_cast<size_t>(stack)][static_cast<size_t>(level - 1)];
  auto up1 = apply(tape, blocks[0], x);
  auto low1 = apply(tape, blocks[1], tape.avg_pool(x, 2));
  auto low2 = level > 1 ? hourglass(tape, stack, level - 1, low1)
                        : apply(tape, bottom_[static_cast<size_t>(stack)], low1);
  auto low3 = apply(tape, blocks[2], low2);
  return tape.add(up1, tape.upsample2(low3));
}

std::vector<Tape::Var> HourglassNet::forward(Tape& tape, Tape::Var image) {
  const Tensor& img = tape.value(image);
  require(img.rank() == 4 && img.dim(0) == 3 && img.dim(2) == cfg_.input_size &&
              img.dim(3) == cfg_.input_size,
          ErrorKind::Configuration,
          "landmark input must be {3,B," + std::to_string(cfg_.input_size) + "," +
              std::to_string(cfg_.input_size) + "}, got " + shape_str(img.shape));
  auto x = cfg_.scale() > 1 ? tape.avg_pool(image, cfg_.scale()) : image;
  x = tape.relu(apply(tape, stem_, x, 1, 1));
  x = apply(tape, stem_res_, x);
  std::vector<Tape::Var> outputs;
  for (int s = 0; s < cfg_.num_stacks; ++s) {
    const auto su = static_cast<size_t>(s);
    auto y = hourglass(tape, s, cfg_.depth(), x);
    auto feat = tape.relu(apply(tape, feat_[su], y, 1, 0));
    auto heat = apply(tape, heat_[su], feat, 1, 0);
    outputs.push_back(heat);
    if (s + 1 < cfg_.num_stacks) {
      x = tape.add(x, tape.add(apply(tape, merge_feat_[su], feat, 1, 0),
                               apply(tape, merge_heat_[su], heat, 1, 0)));
    }
  }
  return outputs;
}

HeatmapStack stack_from_tensor(const Tensor& logits, int64_t b) {
  require(logits.rank() == 4 && b >= 0 && b < logits.dim(1), ErrorKind::InvalidInput,
          "stack_from_tensor: bad shape or sample index");
  const int64_t n = logits.dim(0), batch = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  HeatmapStack stack;
  stack.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const float* src = logits.ptr() + (i * batch + b) * h * w;
    stack.emplace_back(static_cast<int>(h), static_cast<int>(w),
                       std::vector<double>(src, src + h * w));
  }
  return stack;
}

LandmarkSet decode_landmarks(const HeatmapStack& final_stack, const LandmarkConfig& cfg,
                             double temperature) {
  require(static_cast<int>(final_stack.size()) == cfg.num_landmarks, ErrorKind::InvalidInput,
          "decode: stack has " + std::to_string(final_stack.size()) + " maps, config expects " +
              std::to_string(cfg.num_landmarks));
  const double scale = static_cast<double>(cfg.input_size) / cfg.heatmap_size;
  LandmarkSet out;
  out.coords.reserve(final_stack.size());
  for (const Heatmap& h : final_stack) {
    const Vec2 mu = soft_argmax(spatial_softmax(h, temperature));
    out.coords.push_back({mu[0] * scale, mu[1] * scale});
  }
  return out;
}

double distance_value(double r, Distance d) {
  const double a = std::abs(r);
  if (d == Distance::L1) return a;
  return a < 1.0 ? 0.5 * r * r : a - 0.5;
}

double distance_slope(double r, Distance d) {
  if (d == Distance::L1) return r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
  if (std::abs(r) < 1.0) return r;
  return r > 0.0 ? 1.0 : -1.0;
}

double star_term(const Heatmap& p, const Vec2& target, const HeatmapStats& stats, Distance d,
                 Heatmap* grad_p) {
  const Vec2 mu = soft_argmax(p);
  const double rx = target[0] - mu[0];
  const double ry = target[1] - mu[1];
  const double r1 = stats.v1[0] * rx + stats.v1[1] * ry;
  const double r2 = stats.v2[0] * rx + stats.v2[1] * ry;
  const double s1 = 1.0 / std::sqrt(stats.lambda1);
  const double s2 = 1.0 / std::sqrt(stats.lambda2);
  const double loss = s1 * distance_value(r1, d) + s2 * distance_value(r2, d);
  if (grad_p) {
    const double g1 = s1 * distance_slope(r1, d);
    const double g2 = s2 * distance_slope(r2, d);
    // dL/dmu = -(g1 v1 + g2 v2)
    const double gx = -(g1 * stats.v1[0] + g2 * stats.v2[0]);
    const double gy = -(g1 * stats.v1[1] + g2 * stats.v2[1]);
    *grad_p = Heatmap(p.height(), p.width());
    for (int r = 0; r < p.height(); ++r)
      for (int c = 0; c < p.width(); ++c) grad_p->at(r, c) = gx * c + gy * r;
  }
  return loss;
}

namespace {

// dL/dz for p = softmax(z / T) given dL/dp.
void softmax_backward(const Heatmap& p, const Heatmap& grad_p, double temperature, Heatmap& grad_z) {
  double inner = 0.0;
  auto pv = p.values();
  auto gv = grad_p.values();
  for (size_t i = 0; i < pv.size(); ++i) inner += pv[i] * gv[i];
  grad_z = Heatmap(p.height(), p.width());
  auto out = grad_z.values();
  for (size_t i = 0; i < pv.size(); ++i) out[i] = pv[i] * (gv[i] - inner) / temperature;
}

}  // namespace

StarLoss star_loss(const std::vector<HeatmapStack>& stacks, const LandmarkSet& targets, Distance d,
                   double temperature,
                   const std::vector<std::vector<HeatmapStats>>* frozen_stats) {
  require(!stacks.empty(), ErrorKind::InvalidInput, "star_loss: no stacks");
  StarLoss out;
  const size_t n = targets.size();
  const double norm = 1.0 / static_cast<double>(stacks.size() * n);
  for (size_t s = 0; s < stacks.size(); ++s) {
    require(stacks[s].size() == n, ErrorKind::InvalidInput,
            "star_loss: stack has " + std::to_string(stacks[s].size()) + " heatmaps but " +
                std::to_string(n) + " targets");
    HeatmapStack grads;
    grads.reserve(n);
    for (size_t i = 0; i < n; ++i) {
      const Heatmap p = spatial_softmax(stacks[s][i], temperature);
      const HeatmapStats stats =
          frozen_stats ? (*frozen_stats)[s][i] : heatmap_pca(p, soft_argmax(p));
      Heatmap gp;
      out.value += norm * star_term(p, targets.coords[i], stats, d, &gp);
      for (double& v : gp.values()) v *= norm;
      Heatmap gz;
      softmax_backward(p, gp, temperature, gz);
      grads.push_back(std::move(gz));
    }
    out.grad.push_back(std::move(grads));
  }
  return out;
}

double star_loss_batch(const std::vector<const Tensor*>& stacks,
                       const std::vector<LandmarkSet>& targets, Distance d,
                       std::vector<Tensor>* grads) {
  require(!stacks.empty(), ErrorKind::InvalidInput, "star_loss_batch: no stacks");
  const Tensor& first = *stacks.front();
  const int64_t n = first.dim(0), batch = first.dim(1), h = first.dim(2), w = first.dim(3);
  require(static_cast<int64_t>(targets.size()) == batch, ErrorKind::InvalidInput,
          "star_loss_batch: target count does not match batch");
  const double norm = 1.0 / static_cast<double>(stacks.size() * batch * n);
  double total = 0.0;
  if (grads) grads->clear();
  Heatmap logits(static_cast<int>(h), static_cast<int>(w));
  for (const Tensor* t : stacks) {
    require(t->shape == first.shape, ErrorKind::InvalidInput, "star_loss_batch: stack shape mismatch");
    Tensor g(t->shape);
    for (int64_t b = 0; b < batch; ++b) {
      require(static_cast<int64_t>(targets[static_cast<size_t>(b)].size()) == n,
              ErrorKind::InvalidInput, "star_loss_batch: landmark count mismatch");
      for (int64_t i = 0; i < n; ++i) {
        const float* src = t->ptr() + (i * batch + b) * h * w;
        auto lv = logits.values();
        for (int64_t k = 0; k < h * w; ++k) lv[static_cast<size_t>(k)] = src[k];
        const Heatmap p = spatial_softmax(logits);
        const HeatmapStats stats = heatmap_pca(p, soft_argmax(p));
        Heatmap gp;
        total += norm * star_term(p, targets[static_cast<size_t>(b)].coords[static_cast<size_t>(i)],
                                  stats, d, &gp);
        if (!grads) continue;
        Heatmap gz;
        softmax_backward(p, gp, 1.0, gz);
        float* dst = g.ptr() + (i * batch + b) * h * w;
        auto gzv = gz.values();
        for (int64_t k = 0; k < h * w; ++k) dst[k] = static_cast<float>(norm * gzv[static_cast<size_t>(k)]);
      }
    }
    if (grads) grads->push_back(std::move(g));
  }
  return total;
}

double nme_interocular(const LandmarkSet& pred, const LandmarkSet& gt, size_t left_eye,
                       size_t right_eye) {
  require(pred.size() == gt.size() && !gt.coords.empty(), ErrorKind::InvalidInput,
          "nme: landmark counts differ or are empty");
  require(left_eye < gt.size() && right_eye < gt.size(), ErrorKind::InvalidInput,
          "nme: eye index out of range");
  const double iod = std::hypot(gt.coords[left_eye][0] - gt.coords[right_eye][0],
                                gt.coords[left_eye][1] - gt.coords[right_eye][1]);
  require(iod > 0.0, ErrorKind::DegenerateInput, "nme: coincident eye corners");
  double sum = 0.0;
  for (size_t i = 0; i < gt.size(); ++i)
    sum += std::hypot(pred.coords[i][0] - gt.coords[i][0], pred.coords[i][1] - gt.coords[i][1]);
  return sum / static_cast<double>(gt.size()) / iod;
}

std::pair<size_t, size_t> default_eye_indices(int num_landmarks) {
  if (num_landmarks == 68) return {36, 45};
  if (num_landmarks == 98) return {60, 72};
  return {0, static_cast<size_t>(num_landmarks > 1 ? num_landmarks - 1 : 0)};
}

}  // namespace mtface
