#include "msdc/kitti.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace msdc {

std::pair<Tensor<float>, Mask> decode_kitti_disparity(const PngImage& image) {
  if (image.bit_depth != 16 || image.channels != 1) {
    throw std::invalid_argument("KITTI disparity must be 16-bit single-channel, got " +
                                std::to_string(image.bit_depth) + "-bit with " + std::to_string(image.channels) +
                                " channel(s)");
  }
  Tensor<float> gt({image.height, image.width});
  Mask valid(image.samples.size(), 0);
  for (std::size_t i = 0; i < image.samples.size(); ++i) {
    const std::uint16_t s = image.samples[i];
    valid[i] = s != 0;
    gt[static_cast<std::int64_t>(i)] = s == 0 ? 0.0f : static_cast<float>(s) / 256.0f;
  }
  return {std::move(gt), std::move(valid)};
}

PngImage encode_kitti_disparity(const Tensor<float>& disparity, const Mask& valid) {
  if (disparity.rank() != 2) throw ShapeError("disparity must be (H, W), got " + shape_str(disparity.shape()));
  if (!valid.empty() && static_cast<std::int64_t>(valid.size()) != disparity.size()) {
    throw ShapeError("validity map size does not match disparity " + shape_str(disparity.shape()));
  }
  PngImage img;
  img.height = static_cast<int>(disparity.dim(0));
  img.width = static_cast<int>(disparity.dim(1));
  img.channels = 1;
  img.bit_depth = 16;
  img.samples.resize(static_cast<std::size_t>(disparity.size()));
  for (std::int64_t i = 0; i < disparity.size(); ++i) {
    const bool ok = valid.empty() || valid[static_cast<std::size_t>(i)];
    const double d = disparity[i];
    if (!ok || !std::isfinite(d)) continue;
    const double stored = std::clamp(std::round(d * 256.0), 1.0, 65535.0);
    img.samples[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(stored);
  }
  return img;
}

}  // namespace msdc
