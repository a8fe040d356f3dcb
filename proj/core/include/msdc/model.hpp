#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "msdc/autograd.hpp"
#include "msdc/ops.hpp"

namespace msdc {

/// Ablation switch. The single-scale variants replace the feature pyramid
/// (2D) and/or the matching encoder-decoder (3D) with equal-depth stacks at
/// one resolution.
enum class Variant { full, single_scale_2d, single_scale_3d, single_scale_both };

std::string to_string(Variant v);
/// Accepts the long names as well as the short forms full|2d|3d|both.
Variant parse_variant(const std::string& text);

struct ModelConfig {
  int base_channels = 32;     // F: unary feature width
  int max_disparity = 192;    // D: multiple of 4
  int dense_block_depth = 4;  // layers per densely connected group
  int dense_groups = 4;       // groups per dense block
  int fusion_channels = 128;  // width of the fusion stage
  int levels_3d = 4;          // resolution levels of the 3D matcher
  Variant variant = Variant::full;

  /// Full-scale defaults with fusion width tied to 4F.
  static ModelConfig with_base(int base_channels, int max_disparity);

  bool multi_scale_2d() const { return variant == Variant::full || variant == Variant::single_scale_3d; }
  bool multi_scale_3d() const { return variant == Variant::full || variant == Variant::single_scale_2d; }
  int growth() const { return base_channels >= 2 ? base_channels / 2 : 1; }

  /// Height and width must be multiples of this.
  std::int64_t spatial_divisor() const;
  void validate() const;
  /// Throws with the required divisor when (height, width) cannot be processed.
  void check_input(std::int64_t height, std::int64_t width) const;

  bool operator==(const ModelConfig&) const = default;
};

struct LayerSpec {
  enum class Kind { conv2d, conv3d, tconv3d };
  std::string name;
  Kind kind = Kind::conv2d;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  bool bias = false;
  bool batch_norm = true;
  bool relu = true;

  int spatial_rank() const { return kind == Kind::conv2d ? 2 : 3; }
  Shape weight_shape() const;
  std::int64_t param_count() const;
};

/// Every learnable layer in execution order.
std::vector<LayerSpec> layer_plan(const ModelConfig& config);

/// Exact number of learnable scalars induced by the configuration.
std::int64_t count_params(const ModelConfig& config);
std::int64_t count_params(const std::vector<LayerSpec>& plan);

/// Fan-in scaled normal weights, zero biases, unit/zero batch-norm affine terms.
template <typename T>
ParamSet<T> init_params(const ModelConfig& config, std::uint64_t seed);

/// Unary features for both views through one shared set of weights.
/// Inputs (N, 3, H, W) in [0, 1]; outputs (N, F, H/4, W/4) each.
template <typename T>
std::pair<Var<T>, Var<T>> extract_features(const Var<T>& left, const Var<T>& right, ParamSet<T>& params,
                                           const ModelConfig& config, NormMode mode);

/// (N, F, h, w) pair -> (N, 2F, D/4, h, w).
template <typename T>
Var<T> build_cost_volume(const Var<T>& left_features, const Var<T>& right_features, int max_disparity);

/// Residual 3D encoder-decoder; output shape equals the volume's shape.
template <typename T>
Var<T> match_features(const Var<T>& volume, ParamSet<T>& params, const ModelConfig& config, NormMode mode);

/// (N, 2F, D/4, H/4, W/4) -> (N, D, H, W) matching costs.
template <typename T>
Var<T> recover_scale(const Var<T>& matched, ParamSet<T>& params, const ModelConfig& config, NormMode mode);

/// Per pixel sum_d d * softmax(-cost)_d over axis 1 of (N, D, H, W).
template <typename T>
Var<T> soft_argmin(const Var<T>& cost);

/// Full pipeline: (N, 3, H, W) views -> (N, H, W) disparities in [0, D-1].
template <typename T>
Var<T> forward(const Var<T>& left, const Var<T>& right, ParamSet<T>& params, const ModelConfig& config,
               NormMode mode);

}  // namespace msdc
