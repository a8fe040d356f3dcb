#pragma once

#include "msdc/png_io.hpp"
#include "msdc/tensor.hpp"

namespace msdc {

/// 8-bit RGB render of an (H, W) disparity map. d / max_disparity, clamped to
/// [0, 1], runs blue -> green -> red. Masked-out and non-finite pixels are black.
PngImage render_colormap(const Tensor<float>& disparity, double max_disparity, const Mask& valid = {});

}  // namespace msdc
