#pragma once

#include <utility>

#include "msdc/png_io.hpp"
#include "msdc/tensor.hpp"

namespace msdc {

/// KITTI disparity PNG: 16-bit gray, disparity = stored / 256, stored 0 = no
/// ground truth. Rejects anything other than single-channel 16-bit input.
std::pair<Tensor<float>, Mask> decode_kitti_disparity(const PngImage& image);

/// Inverse of decode: rounds to the nearest 1/256 px and clamps into
/// [1, 65535] at valid pixels; invalid pixels store 0.
PngImage encode_kitti_disparity(const Tensor<float>& disparity, const Mask& valid);

}  // namespace msdc
