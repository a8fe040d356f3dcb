#include "msdc/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <unordered_map>

namespace msdc {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::single_scale_2d: return "single_scale_2d";
    case Variant::single_scale_3d: return "single_scale_3d";
    case Variant::single_scale_both: return "single_scale_both";
  }
  return "unknown";
}

Variant parse_variant(const std::string& text) {
  if (text == "full") return Variant::full;
  if (text == "2d" || text == "single_scale_2d") return Variant::single_scale_2d;
  if (text == "3d" || text == "single_scale_3d") return Variant::single_scale_3d;
  if (text == "both" || text == "single_scale_both") return Variant::single_scale_both;
  throw std::invalid_argument("unknown variant '" + text + "' (expected full, 2d, 3d or both)");
}

ModelConfig ModelConfig::with_base(int base_channels, int max_disparity) {
  ModelConfig c;
  c.base_channels = base_channels;
  c.max_disparity = max_disparity;
  c.fusion_channels = 4 * base_channels;
  return c;
}

std::int64_t ModelConfig::spatial_divisor() const {
  std::int64_t div = multi_scale_2d() ? 8 : 4;
  if (multi_scale_3d()) div = std::max<std::int64_t>(div, std::int64_t{4} << (levels_3d - 1));
  return div;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("invalid model config: " + m); };
  if (base_channels < 1) fail("base_channels must be positive");
  if (max_disparity < 4 || max_disparity % 4 != 0) {
    fail("max_disparity must be a positive multiple of 4, got " + std::to_string(max_disparity));
  }
  if (dense_block_depth < 1 || dense_groups < 1) fail("dense block depth and groups must be positive");
  if (fusion_channels < 1) fail("fusion_channels must be positive");
  if (levels_3d < 2 || levels_3d > 8) fail("levels_3d must be in [2, 8]");
  if (multi_scale_3d()) {
    const int div = 4 << (levels_3d - 1);
    if (max_disparity % div != 0) {
      fail("max_disparity " + std::to_string(max_disparity) + " must be divisible by " + std::to_string(div) +
           " for " + std::to_string(levels_3d) + " matching levels");
    }
  }
}

void ModelConfig::check_input(std::int64_t height, std::int64_t width) const {
  const std::int64_t div = spatial_divisor();
  if (height <= 0 || width <= 0 || height % div != 0 || width % div != 0) {
    throw std::invalid_argument("input " + std::to_string(height) + "x" + std::to_string(width) +
                                " is not divisible by " + std::to_string(div) + " (required divisor for variant " +
                                to_string(variant) + ", levels_3d=" + std::to_string(levels_3d) + ")");
  }
}

Shape LayerSpec::weight_shape() const {
  Shape s;
  if (kind == Kind::tconv3d) {
    s = {in_channels, out_channels};
  } else {
    s = {out_channels, in_channels};
  }
  for (int a = 0; a < spatial_rank(); ++a) s.push_back(kernel);
  return s;
}

std::int64_t LayerSpec::param_count() const {
  std::int64_t n = numel(weight_shape());
  if (bias) n += out_channels;
  if (batch_norm) n += 2 * out_channels;
  return n;
}

namespace {

std::string at(const std::string& prefix, const std::string& leaf) { return prefix + "." + leaf; }

class PlanBuilder {
 public:
  void conv2d(std::string name, int in, int out, int k, int stride, bool bn = true, bool relu = true) {
    add({std::move(name), LayerSpec::Kind::conv2d, in, out, k, stride, !bn, bn, relu});
  }
  void conv3d(std::string name, int in, int out, int stride, bool bn = true, bool relu = true) {
    add({std::move(name), LayerSpec::Kind::conv3d, in, out, 3, stride, !bn, bn, relu});
  }
  void tconv3d(std::string name, int in, int out, bool bn = true, bool relu = true) {
    add({std::move(name), LayerSpec::Kind::tconv3d, in, out, 3, 2, false, bn, relu});
  }

  void dense_block(const std::string& prefix, int width, int growth, int groups, int depth) {
    for (int g = 0; g < groups; ++g) {
      const std::string group = at(prefix, "g" + std::to_string(g));
      for (int l = 0; l < depth; ++l) conv2d(at(group, "l" + std::to_string(l)), width + l * growth, growth, 3, 1);
      conv2d(at(group, "fuse"), width + depth * growth, width, 1, 1);
    }
  }

  std::vector<LayerSpec> take() { return std::move(layers_); }

 private:
  void add(LayerSpec s) { layers_.push_back(std::move(s)); }
  std::vector<LayerSpec> layers_;
};

void plan_features(PlanBuilder& b, const ModelConfig& c) {
  const int F = c.base_channels, g = c.growth();
  b.conv2d("dsfe.stem", 3, F, 5, 2);
  b.dense_block("dsfe.half", F, g, c.dense_groups, c.dense_block_depth);
  if (c.multi_scale_2d()) {
    b.conv2d("dsfe.down1", F, F, 3, 2);
    b.dense_block("dsfe.quarter", F, g, c.dense_groups, c.dense_block_depth);
    b.conv2d("dsfe.down2", F, F, 3, 2);
    b.dense_block("dsfe.eighth", F, g, c.dense_groups, c.dense_block_depth);
  } else {
    b.dense_block("dsfe.stage1", F, g, c.dense_groups, c.dense_block_depth);
    b.dense_block("dsfe.stage2", F, g, c.dense_groups, c.dense_block_depth);
  }
  b.conv2d("msff.reduce", 3 * F, c.fusion_channels, 5, 2);
  b.dense_block("msff.dense", c.fusion_channels, g, c.dense_groups, c.dense_block_depth);
  b.conv2d("msff.unary", c.fusion_channels, F, 3, 1, false, false);
}

void plan_matcher(PlanBuilder& b, const ModelConfig& c) {
  const int F = c.base_channels, L = c.levels_3d;
  b.conv3d("match.entry", 2 * F, F, 1);
  if (c.multi_scale_3d()) {
    for (int i = 0; i + 1 < L; ++i) {
      const int ch = F << i;
      const std::string enc = "match.enc" + std::to_string(i);
      b.conv3d(at(enc, "a"), ch, ch, 1);
      b.conv3d(at(enc, "b"), ch, ch, 1, false, false);
      b.conv3d("match.down" + std::to_string(i + 1), ch, ch * 2, 2);
    }
    for (int i = L - 2; i >= 0; --i) b.tconv3d("match.up" + std::to_string(i), F << (i + 1), F << i);
  } else {
    for (int j = 0; j < 2 * (L - 1); ++j) {
      const std::string res = "match.res" + std::to_string(j);
      b.conv3d(at(res, "a"), F, F, 1);
      b.conv3d(at(res, "b"), F, F, 1, false, false);
    }
  }
  b.conv3d("match.exit", F, 2 * F, 1, false, false);
}

void plan_recovery(PlanBuilder& b, const ModelConfig& c) {
  const int F = c.base_channels;
  b.tconv3d("recover.up1", 2 * F, F);
  b.tconv3d("recover.up2", F, 1, false, false);
}

/// Applies named layers from the plan to graph values.
template <typename T>
class LayerRunner {
 public:
  LayerRunner(ParamSet<T>& params, const ModelConfig& config, NormMode mode) : params_(params), mode_(mode) {
    for (auto& s : layer_plan(config)) specs_.emplace(s.name, std::move(s));
  }

  Var<T> operator()(const std::string& name, const Var<T>& x) {
    auto it = specs_.find(name);
    if (it == specs_.end()) throw std::logic_error("layer '" + name + "' is not in the plan");
    const LayerSpec& s = it->second;
    const Var<T>& w = params_.at(at(name, "weight")).var;
    Var<T> y;
    if (s.kind == LayerSpec::Kind::tconv3d) {
      y = transposed_convolve(x, w, 3);
    } else {
      const Var<T> b = s.bias ? params_.at(at(name, "bias")).var : Var<T>{};
      y = convolve(x, w, b, s.spatial_rank(), s.stride, s.kernel / 2);
    }
    if (s.batch_norm) {
      BatchNormOptions opt;
      opt.mode = mode_;
      y = batch_norm(y, params_.at(at(name, "bn.gamma")).var, params_.at(at(name, "bn.beta")).var,
                     params_.buffer(at(name, "bn.running_mean")), params_.buffer(at(name, "bn.running_var")), opt);
    }
    if (s.relu) y = relu(y);
    return y;
  }

  Var<T> dense_block(const std::string& prefix, Var<T> x, int groups, int depth) {
    for (int g = 0; g < groups; ++g) {
      const std::string group = at(prefix, "g" + std::to_string(g));
      std::vector<Var<T>> feats{x};
      for (int l = 0; l < depth; ++l) {
        const Var<T> in = feats.size() == 1 ? feats.front() : concat(feats, 1);
        feats.push_back((*this)(at(group, "l" + std::to_string(l)), in));
      }
      x = (*this)(at(group, "fuse"), concat(feats, 1));
    }
    return x;
  }

  /// x + b(a(x))
  Var<T> residual(const std::string& prefix, const Var<T>& x) {
    return add(x, (*this)(at(prefix, "b"), (*this)(at(prefix, "a"), x)));
  }

 private:
  ParamSet<T>& params_;
  NormMode mode_;
  std::unordered_map<std::string, LayerSpec> specs_;
};

}  // namespace

std::vector<LayerSpec> layer_plan(const ModelConfig& config) {
  config.validate();
  PlanBuilder b;
  plan_features(b, config);
  plan_matcher(b, config);
  plan_recovery(b, config);
  return b.take();
}

std::int64_t count_params(const std::vector<LayerSpec>& plan) {
  std::int64_t n = 0;
  for (const auto& s : plan) n += s.param_count();
  return n;
}

std::int64_t count_params(const ModelConfig& config) { return count_params(layer_plan(config)); }

template <typename T>
ParamSet<T> init_params(const ModelConfig& config, std::uint64_t seed) {
  ParamSet<T> params;
  std::mt19937_64 rng(seed);
  for (const auto& s : layer_plan(config)) {
    const Shape ws = s.weight_shape();
    double fan_in = static_cast<double>(numel(ws)) / s.out_channels;
    if (s.kind == LayerSpec::Kind::tconv3d) fan_in = static_cast<double>(numel(ws)) / s.in_channels / 8.0;
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
    Tensor<T> w(ws);
    for (auto& v : w.values()) v = static_cast<T>(normal(rng));
    params.add(at(s.name, "weight"), std::move(w));
    if (s.bias) params.add(at(s.name, "bias"), Tensor<T>({s.out_channels}, T(0)));
    if (s.batch_norm) {
      params.add(at(s.name, "bn.gamma"), Tensor<T>({s.out_channels}, T(1)));
      params.add(at(s.name, "bn.beta"), Tensor<T>({s.out_channels}, T(0)));
      params.add_buffer(at(s.name, "bn.running_mean"), Tensor<T>({s.out_channels}, T(0)));
      params.add_buffer(at(s.name, "bn.running_var"), Tensor<T>({s.out_channels}, T(1)));
    }
  }
  return params;
}

template <typename T>
std::pair<Var<T>, Var<T>> extract_features(const Var<T>& left, const Var<T>& right, ParamSet<T>& params,
                                           const ModelConfig& config, NormMode mode) {
  const Shape& ls = left.shape();
  if (ls.size() != 4 || ls[1] != 3 || ls != right.shape()) {
    throw ShapeError("stereo views must share shape (N, 3, H, W), got " + shape_str(ls) + " and " +
                     shape_str(right.shape()));
  }
  config.check_input(ls[2], ls[3]);
  const std::int64_t N = ls[0], H = ls[2], W = ls[3];
  LayerRunner<T> run(params, config, mode);
  const int groups = config.dense_groups, depth = config.dense_block_depth;

  // Both views travel as one batch so every layer sees identical weights.
  Var<T> x = run("dsfe.stem", concat<T>({left, right}, 0));
  const Var<T> half = run.dense_block("dsfe.half", x, groups, depth);
  Var<T> pyramid;
  if (config.multi_scale_2d()) {
    const Var<T> quarter = run.dense_block("dsfe.quarter", run("dsfe.down1", half), groups, depth);
    const Var<T> eighth = run.dense_block("dsfe.eighth", run("dsfe.down2", quarter), groups, depth);
    pyramid = concat<T>({half, resize_bilinear(quarter, H / 2, W / 2), resize_bilinear(eighth, H / 2, W / 2)}, 1);
  } else {
    const Var<T> s1 = run.dense_block("dsfe.stage1", half, groups, depth);
    const Var<T> s2 = run.dense_block("dsfe.stage2", s1, groups, depth);
    pyramid = concat<T>({half, s1, s2}, 1);
  }
  Var<T> fused = run("msff.reduce", pyramid);
  fused = run.dense_block("msff.dense", fused, groups, depth);
  const Var<T> unary = run("msff.unary", fused);
  auto views = split(unary, 0, {N, N});
  return {views[0], views[1]};
}

template <typename T>
Var<T> build_cost_volume(const Var<T>& left_features, const Var<T>& right_features, int max_disparity) {
  if (max_disparity < 4 || max_disparity % 4 != 0) {
    throw std::invalid_argument("max disparity " + std::to_string(max_disparity) + " is not a positive multiple of 4");
  }
  return shift_concat_volume(left_features, right_features, max_disparity / 4);
}

template <typename T>
Var<T> match_features(const Var<T>& volume, ParamSet<T>& params, const ModelConfig& config, NormMode mode) {
  config.validate();
  const Shape& vs = volume.shape();
  const int F = config.base_channels;
  if (vs.size() != 5 || vs[1] != 2 * F || vs[2] != config.max_disparity / 4) {
    throw ShapeError("cost volume " + shape_str(vs) + " does not match config (N, " + std::to_string(2 * F) + ", " +
                     std::to_string(config.max_disparity / 4) + ", h, w)");
  }
  const int L = config.levels_3d;
  if (config.multi_scale_3d()) {
    const std::int64_t div = std::int64_t{1} << (L - 1);
    for (int a = 2; a < 5; ++a) {
      if (vs[a] % div != 0) {
        throw ShapeError("cost volume " + shape_str(vs) + " extents must be divisible by " + std::to_string(div) +
                         " for " + std::to_string(L) + " matching levels");
      }
    }
  }
  LayerRunner<T> run(params, config, mode);
  Var<T> x = run("match.entry", volume);
  if (config.multi_scale_3d()) {
    std::vector<Var<T>> skips;
    for (int i = 0; i + 1 < L; ++i) {
      x = run.residual("match.enc" + std::to_string(i), x);
      skips.push_back(x);
      x = run("match.down" + std::to_string(i + 1), x);
    }
    for (int i = L - 2; i >= 0; --i) {
      x = add(run("match.up" + std::to_string(i), x), skips[static_cast<std::size_t>(i)]);
    }
  } else {
    for (int j = 0; j < 2 * (L - 1); ++j) x = run.residual("match.res" + std::to_string(j), x);
  }
  return run("match.exit", x);
}

template <typename T>
Var<T> recover_scale(const Var<T>& matched, ParamSet<T>& params, const ModelConfig& config, NormMode mode) {
  const Shape& ms = matched.shape();
  if (ms.size() != 5 || ms[1] != 2 * config.base_channels) {
    throw ShapeError("matched volume " + shape_str(ms) + " is not (N, " + std::to_string(2 * config.base_channels) +
                     ", d, h, w)");
  }
  LayerRunner<T> run(params, config, mode);
  const Var<T> cost = run("recover.up2", run("recover.up1", matched));
  const Shape& cs = cost.shape();
  return reshape(cost, {cs[0], cs[2], cs[3], cs[4]});
}

template <typename T>
Var<T> soft_argmin(const Var<T>& cost) {
  if (cost.shape().size() != 4) throw ShapeError("soft_argmin expects (N, D, H, W), got " + shape_str(cost.shape()));
  Var<T> disp = disparity_expectation(softmax_along(scale(cost, T(-1)), 1));
  // Probabilities summing to 1 + ulp can land a hair past D - 1; the clamp
  // only touches the value (the backward rule never reads it).
  const T top = static_cast<T>(cost.shape()[1] - 1);
  for (auto& v : disp.mutable_value().values()) v = std::clamp(v, T(0), top);
  return disp;
}

template <typename T>
Var<T> forward(const Var<T>& left, const Var<T>& right, ParamSet<T>& params, const ModelConfig& config,
               NormMode mode) {
  auto [lf, rf] = extract_features(left, right, params, config, mode);
  const Var<T> volume = build_cost_volume(lf, rf, config.max_disparity);
  const Var<T> matched = match_features(volume, params, config, mode);
  return soft_argmin(recover_scale(matched, params, config, mode));
}

#define MSDC_INSTANTIATE_MODEL(T)                                                                                 \
  template ParamSet<T> init_params<T>(const ModelConfig&, std::uint64_t);                                         \
  template std::pair<Var<T>, Var<T>> extract_features(const Var<T>&, const Var<T>&, ParamSet<T>&,                 \
                                                      const ModelConfig&, NormMode);                              \
  template Var<T> build_cost_volume(const Var<T>&, const Var<T>&, int);                                           \
  template Var<T> match_features(const Var<T>&, ParamSet<T>&, const ModelConfig&, NormMode);                      \
  template Var<T> recover_scale(const Var<T>&, ParamSet<T>&, const ModelConfig&, NormMode);                       \
  template Var<T> soft_argmin(const Var<T>&);                                                                     \
  template Var<T> forward(const Var<T>&, const Var<T>&, ParamSet<T>&, const ModelConfig&, NormMode);

MSDC_INSTANTIATE_MODEL(float)
MSDC_INSTANTIATE_MODEL(double)

}  // namespace msdc
