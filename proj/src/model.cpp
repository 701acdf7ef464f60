#include "poolnet/model.hpp"

#include <algorithm>
#include <cmath>

#include "poolnet/ops.hpp"
#include "poolnet/rng.hpp"

namespace poolnet {

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper_scale() {
  ModelConfig c;
  c.backbone_widths = {64, 128, 256, 512, 512};
  return c;
}

ModelConfig ModelConfig::ablation_row(int row, ModelConfig base) {
  static constexpr std::array<std::array<bool, 3>, 6> kRows{{
      {false, false, false},
      {true, false, false},
      {false, true, false},
      {true, true, false},
      {false, false, true},
      {true, true, true},
  }};
  if (row < 1 || row > 6) throw ConfigError("ablation row must be 1..6");
  const auto& r = kRows[static_cast<std::size_t>(row - 1)];
  base.enable_ppm = r[0];
  base.enable_ggf = r[1];
  base.enable_fam = r[2];
  return base;
}

std::array<int, 4> ModelConfig::pyramid() const {
  const auto& src = pyramid_channels.empty()
                        ? std::vector<int>(backbone_widths.begin() + 1, backbone_widths.end())
                        : pyramid_channels;
  return {src[0], src[1], src[2], src[3]};
}

std::array<int, 3> ModelConfig::edge_residual_widths() const {
  if (!edge_widths.empty()) return {edge_widths[0], edge_widths[1], edge_widths[2]};
  return {backbone_widths[1], backbone_widths[2], backbone_widths[3]};
}

void ModelConfig::validate() const {
  auto positive = [](const std::vector<int>& v) {
    return std::all_of(v.begin(), v.end(), [](int x) { return x >= 1; });
  };
  if (backbone_widths.size() != 5 || !positive(backbone_widths)) {
    throw ConfigError("backbone_widths needs 5 positive entries");
  }
  if (!pyramid_channels.empty() && (pyramid_channels.size() != 4 || !positive(pyramid_channels))) {
    throw ConfigError("pyramid_channels needs 4 positive entries");
  }
  if (!edge_widths.empty() && (edge_widths.size() != 3 || !positive(edge_widths))) {
    throw ConfigError("edge_widths needs 3 positive entries");
  }
  if (!std::is_sorted(fam_rates.begin(), fam_rates.end())) {
    throw ConfigError("fam_rates must be sorted ascending");
  }
  for (int r : fam_rates) {
    if (r != 2 && r != 4 && r != 8 && r != 16) {
      throw ConfigError("fam_rates entries must be one of 2, 4, 8, 16");
    }
  }
  if (std::adjacent_find(fam_rates.begin(), fam_rates.end()) != fam_rates.end()) {
    throw ConfigError("fam_rates must not repeat");
  }
  for (int s : ppm_sizes) {
    if (s < 2) throw ConfigError("ppm_sizes entries must be >= 2");
  }
}

template <typename T>
PoolNet<T>::PoolNet(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), seed_(seed) {
  config_.validate();
  const auto& bw = config_.backbone_widths;
  const auto pyr = config_.pyramid();

  int in_c = 3;
  for (int s = 0; s < 5; ++s) {
    const std::string base = "backbone.stage" + std::to_string(s + 1);
    Conv a = add_conv(base + ".conv1", in_c, bw[s], 3);
    Conv b = add_conv(base + ".conv2", bw[s], bw[s], 3);
    stages_.push_back({a, b});
    in_c = bw[s];
  }

  const int c5 = bw[4];
  if (config_.enable_ppm) {
    int concat = c5;
    auto sizes = config_.ppm_sizes;
    sizes.push_back(1);  // global average branch
    for (int s : sizes) {
      const std::string name = s == 1 ? "ppm.global" : "ppm.pool" + std::to_string(s);
      ppm_branches_.push_back(add_conv(name, c5, pyr[3], 1));
      concat += pyr[3];
    }
    ppm_merge_ = add_conv("ppm.merge", concat, pyr[3], 3);
  } else if (config_.enable_ggf) {
    plain_guidance_ = add_conv("ggm.plain", c5, pyr[3], 3);
  }

  for (int i = 0; i < 4; ++i) {
    const int level = i + 2;
    const std::string lvl = "level" + std::to_string(level);
    lateral_[i] = add_conv("lateral." + lvl, bw[i + 1], pyr[i], 1);
    const bool injects = config_.enable_ggf || (config_.enable_ppm && level == 5);
    if (injects) ggf_[i] = add_conv("ggf." + lvl, pyr[3], pyr[i], 1);
    if (i < 3 && pyr[i + 1] != pyr[i]) {
      reduce_[i] = add_conv("topdown." + lvl + ".reduce", pyr[i + 1], pyr[i], 1);
    }
    if (config_.enable_fam) {
      Fam f;
      for (int r : config_.fam_rates) {
        f.branches.push_back(add_conv("fam." + lvl + ".pool" + std::to_string(r), pyr[i], pyr[i], 3));
      }
      f.merge = add_conv("fam." + lvl + ".merge", pyr[i], pyr[i], 3);
      fam_[i] = std::move(f);
    } else {
      refine_[i] = add_conv("refine." + lvl, pyr[i], pyr[i], 3);
    }
  }

  int head_in = pyr[0];
  if (config_.enable_edge) {
    const auto widths = config_.edge_residual_widths();
    for (int i = 0; i < 3; ++i) {
      const std::string base = "edge.level" + std::to_string(i + 2);
      EdgeLevel e;
      if (pyr[i] != widths[i]) e.project = add_conv(base + ".project", pyr[i], widths[i], 1);
      e.res1 = add_conv(base + ".res1", widths[i], widths[i], 3);
      e.res2 = add_conv(base + ".res2", widths[i], widths[i], 3);
      e.side = add_conv(base + ".side", widths[i], kEdgeSideChannels, 3);
      e.score = add_conv(base + ".score", kEdgeSideChannels, 1, 1);
      edge_levels_.push_back(e);
    }
    for (int j = 0; j < 3; ++j) {
      edge_fuse_.push_back(
          add_conv("edge.fuse" + std::to_string(j + 1), kEdgeFuseChannels, kEdgeFuseChannels, 3));
    }
    head_in += kEdgeFuseChannels;
  }
  head_ = add_conv("head.score", head_in, 1, 1);
}

template <typename T>
typename PoolNet<T>::Conv PoolNet<T>::add_conv(const std::string& name, int in_c, int out_c,
                                               int kernel) {
  const std::string wname = name + ".weight";
  for (const auto& p : params_) {
    if (p.name == wname) throw ConfigError("duplicate parameter name " + wname);
  }
  Rng rng(derive_seed(seed_, fnv1a(wname)));
  const double fan_in = static_cast<double>(in_c) * kernel * kernel;
  const double fan_out = static_cast<double>(out_c) * kernel * kernel;
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Shape ws{out_c, in_c, kernel, kernel};
  std::vector<T> w(ws.numel());
  for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));

  Conv conv;
  conv.pad = kernel / 2;
  conv.weight = params_.size();
  params_.push_back({wname, Tensor<T>::from(ws, std::move(w), true), true});
  conv.bias = params_.size();
  params_.push_back({name + ".bias", Tensor<T>::zeros(Shape{1, out_c, 1, 1}, true), true});
  return conv;
}

template <typename T>
Tensor<T> PoolNet<T>::apply(const Conv& conv, const Tensor<T>& x) const {
  std::optional<Tensor<T>> bias;
  if (conv.bias) bias = params_[*conv.bias].tensor;
  return conv2d(x, params_[conv.weight].tensor, bias, 1, conv.pad);
}

template <typename T>
Tensor<T> PoolNet<T>::apply_relu(const Conv& conv, const Tensor<T>& x) const {
  return relu(apply(conv, x));
}

template <typename T>
std::size_t PoolNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <typename T>
const Parameter<T>* PoolNet<T>::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename T>
Parameter<T>* PoolNet<T>::find(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename T>
void PoolNet<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename T>
PyramidFeatures<T> PoolNet<T>::backbone(const Tensor<T>& image) const {
  const Shape& s = image.shape();
  if (s.c != 3) throw ShapeError("backbone expects 3-channel input, got " + s.str());
  if (s.h % 16 != 0 || s.w % 16 != 0) {
    throw ShapeError("backbone input " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " must be divisible by 16; pad it first");
  }
  PyramidFeatures<T> out;
  Tensor<T> x = image;
  for (int stage = 0; stage < 5; ++stage) {
    if (stage > 0) x = max_pool2d(x, 2);
    x = apply_relu(stages_[stage][0], x);
    x = apply_relu(stages_[stage][1], x);
    if (stage > 0) out.levels[stage - 1] = x;
  }
  return out;
}

template <typename T>
Tensor<T> PoolNet<T>::ppm(const Tensor<T>& c5, ForwardTrace* trace) const {
  if (!config_.enable_ppm) throw ConfigError("ppm() called with enable_ppm off");
  const int h = c5.shape().h;
  const int w = c5.shape().w;
  std::vector<Tensor<T>> parts{c5};
  if (trace) trace->ppm_branch_sizes.push_back({h, w});
  auto sizes = config_.ppm_sizes;
  sizes.push_back(1);
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    Tensor<T> pooled = adaptive_avg_pool2d(c5, sizes[i], sizes[i]);
    if (trace) trace->ppm_branch_sizes.push_back({pooled.shape().h, pooled.shape().w});
    parts.push_back(resize_bilinear(apply_relu(ppm_branches_[i], pooled), h, w));
  }
  return apply_relu(*ppm_merge_, concat_channels(parts));
}

template <typename T>
Tensor<T> PoolNet<T>::ggf_inject(const Tensor<T>& guidance, int level, ForwardTrace* trace) const {
  if (level < 2 || level > 5) throw ShapeError("ggf_inject: level must be 2..5");
  const auto& conv = ggf_[static_cast<std::size_t>(level - 2)];
  if (!conv) throw ConfigError("no guidance flow configured at level " + std::to_string(level));
  const int factor = 1 << (5 - level);
  if (trace) trace->ggf_factors.push_back({level, factor});
  return upsample_bilinear(apply(*conv, guidance), factor);
}

template <typename T>
Tensor<T> PoolNet<T>::fam(const Tensor<T>& fused, int level, ForwardTrace* trace) const {
  const auto& f = fam_[static_cast<std::size_t>(level - 2)];
  if (!f) throw ConfigError("fam() called with enable_fam off");
  const int h = fused.shape().h;
  const int w = fused.shape().w;
  Tensor<T> total = fused;
  for (std::size_t i = 0; i < config_.fam_rates.size(); ++i) {
    const int r = config_.fam_rates[i];
    // Coarse levels can be smaller than the pooling rate; ceil-sized bins
    // keep every branch defined and equal avg_pool2d when r divides the size.
    Tensor<T> pooled = (h % r == 0 && w % r == 0)
                           ? avg_pool2d(fused, r)
                           : adaptive_avg_pool2d(fused, (h + r - 1) / r, (w + r - 1) / r);
    Tensor<T> branch = upsample_bilinear(apply_relu(f->branches[i], pooled), r);
    total = add(total, crop(branch, h, w));
  }
  if (trace) trace->fam_branch_counts.push_back(static_cast<int>(config_.fam_rates.size()) + 1);
  return apply_relu(f->merge, total);
}

template <typename T>
Tensor<T> PoolNet<T>::residual_block(int index, const Tensor<T>& x) const {
  const auto& e = edge_levels_.at(static_cast<std::size_t>(index));
  Tensor<T> base = e.project ? apply(*e.project, x) : x;
  return add(base, apply(e.res2, apply_relu(e.res1, base)));
}

template <typename T>
std::pair<std::vector<Tensor<T>>, Tensor<T>> PoolNet<T>::edge_branch(
    const std::array<Tensor<T>, 3>& out_levels, int input_h, int input_w,
    ForwardTrace* trace) const {
  if (!config_.enable_edge) throw ConfigError("edge branch called with enable_edge off");
  const int fine_h = out_levels[0].shape().h;
  const int fine_w = out_levels[0].shape().w;
  std::vector<Tensor<T>> logits;
  std::vector<Tensor<T>> sides;
  for (int i = 0; i < 3; ++i) {
    const auto& e = edge_levels_[static_cast<std::size_t>(i)];
    Tensor<T> side = apply_relu(e.side, residual_block(i, out_levels[i]));
    logits.push_back(resize_bilinear(apply(e.score, side), input_h, input_w));
    sides.push_back(resize_bilinear(side, fine_h, fine_w));
  }
  Tensor<T> feat = concat_channels(sides);
  if (trace) trace->edge_concat_channels = feat.shape().c;
  for (const auto& conv : edge_fuse_) feat = apply_relu(conv, feat);
  return {std::move(logits), feat};
}

template <typename T>
ModelOutput<T> PoolNet<T>::top_down(const PyramidFeatures<T>& pyramid, int input_h, int input_w,
                                    const ForwardOptions& options, ForwardTrace* trace) const {
  const auto& c5 = pyramid.levels[3];
  std::optional<Tensor<T>> guidance;
  if (config_.enable_ppm) {
    guidance = ppm(c5, trace);
  } else if (config_.enable_ggf) {
    guidance = apply_relu(*plain_guidance_, c5);
  }
  if (options.skip_global_guidance) guidance.reset();

  std::array<Tensor<T>, 4> outs;
  for (int i = 3; i >= 0; --i) {
    const int level = i + 2;
    Tensor<T> fused = apply(lateral_[i], pyramid.levels[i]);
    if (i < 3) {
      Tensor<T> carry = outs[i + 1];
      if (reduce_[i]) carry = apply(*reduce_[i], carry);
      fused = add(fused, upsample_bilinear(carry, 2));
    }
    if (guidance && ggf_[i]) fused = add(fused, ggf_inject(*guidance, level, trace));
    outs[i] = fam_[i] ? fam(fused, level, trace) : apply_relu(*refine_[i], fused);
  }

  ModelOutput<T> result;
  Tensor<T> head_in = outs[0];
  if (config_.enable_edge) {
    auto [logits, feat] = edge_branch({outs[0], outs[1], outs[2]}, input_h, input_w, trace);
    result.edge_logits = std::move(logits);
    head_in = concat_channels(std::vector<Tensor<T>>{outs[0], feat});
  }
  if (trace) trace->saliency_head_in_channels = head_in.shape().c;
  result.saliency_logits = resize_bilinear(apply(head_, head_in), input_h, input_w);
  return result;
}

template <typename T>
ModelOutput<T> PoolNet<T>::forward(const Tensor<T>& image, const ForwardOptions& options,
                                   ForwardTrace* trace) const {
  return top_down(backbone(image), image.shape().h, image.shape().w, options, trace);
}

template class PoolNet<float>;
template class PoolNet<double>;

}  // namespace poolnet
