#pragma once

#include <cstdint>
#include <vector>

#include "msdc/autograd.hpp"

namespace msdc {

/// Cross-correlation (no kernel flip) over the trailing `spatial_rank` axes.
/// input (N, C_in, spatial...), kernel (C_out, C_in, k...), optional bias (C_out).
/// Output extents are floor((n + 2*pad - k) / stride) + 1.
template <typename T>
Var<T> convolve(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias, int spatial_rank, int stride,
                int zero_pad);

/// Adjoint of the stride-2, pad-1, 3-wide convolution: doubles every spatial
/// extent. The kernel is shared with that convolution, so its layout is
/// (C_in, C_out, k...) from this operation's point of view.
template <typename T>
Var<T> transposed_convolve(const Var<T>& input, const Var<T>& kernel, int spatial_rank, int stride = 2,
                           int zero_pad = 1, int output_pad = 1);

enum class NormMode { train, infer };

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
  NormMode mode = NormMode::train;
};

/// Per-channel normalization over batch and spatial axes. Train mode uses batch
/// statistics (biased variance) and folds them into the running statistics;
/// infer mode normalizes with the running statistics.
template <typename T>
Var<T> batch_norm(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, const BatchNormOptions& options);

template <typename T>
Var<T> relu(const Var<T>& input);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& input, T factor);

template <typename T>
Var<T> reshape(const Var<T>& input, Shape shape);

template <typename T>
Var<T> softmax_along(const Var<T>& input, int axis);

template <typename T>
Var<T> concat(const std::vector<Var<T>>& inputs, int axis);

/// Contiguous slab [begin, begin + length) along `axis`.
template <typename T>
Var<T> slice(const Var<T>& input, int axis, std::int64_t begin, std::int64_t length);

template <typename T>
std::vector<Var<T>> split(const Var<T>& input, int axis, const std::vector<std::int64_t>& sizes);

/// Bilinear resize of (N, C, H, W) with half-pixel centers and edge clamping.
template <typename T>
Var<T> resize_bilinear(const Var<T>& input, std::int64_t out_h, std::int64_t out_w);

/// Concatenation cost volume. left/right (N, F, H, W) -> (N, 2F, levels, H, W);
/// channel block F..2F at level d holds right shifted right by d, zero filled.
template <typename T>
Var<T> shift_concat_volume(const Var<T>& left, const Var<T>& right, std::int64_t levels);

/// (N, D, H, W) probabilities -> (N, H, W) expected index sum_d d * p_d.
template <typename T>
Var<T> disparity_expectation(const Var<T>& prob);

/// Scalar sum_i w_i * x_i against a fixed weight tensor.
template <typename T>
Var<T> weighted_sum(const Var<T>& input, const Tensor<T>& weights);

template <typename T>
Var<T> mean(const Var<T>& input);

}  // namespace msdc
