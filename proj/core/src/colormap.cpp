#include "msdc/colormap.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace msdc {

PngImage render_colormap(const Tensor<float>& disparity, double max_disparity, const Mask& valid) {
  if (!(max_disparity > 0)) throw std::invalid_argument("max disparity must be positive");
  if (disparity.rank() != 2) throw ShapeError("disparity must be (H, W), got " + shape_str(disparity.shape()));
  if (!valid.empty() && static_cast<std::int64_t>(valid.size()) != disparity.size()) {
    throw ShapeError("validity map size does not match disparity " + shape_str(disparity.shape()));
  }
  PngImage img;
  img.height = static_cast<int>(disparity.dim(0));
  img.width = static_cast<int>(disparity.dim(1));
  img.channels = 3;
  img.bit_depth = 8;
  img.samples.assign(static_cast<std::size_t>(3 * disparity.size()), 0);
  auto byte = [](double x) { return static_cast<std::uint16_t>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0)); };
  for (std::int64_t i = 0; i < disparity.size(); ++i) {
    const double d = disparity[i];
    if ((!valid.empty() && !valid[static_cast<std::size_t>(i)]) || !std::isfinite(d)) continue;
    const double t = std::clamp(d / max_disparity, 0.0, 1.0);
    double r, g, b;
    if (t < 0.5) {
      r = 0;
      g = 2 * t;
      b = 1 - 2 * t;
    } else {
      r = 2 * t - 1;
      g = 2 - 2 * t;
      b = 0;
    }
    auto* px = &img.samples[static_cast<std::size_t>(3 * i)];
    px[0] = byte(r);
    px[1] = byte(g);
    px[2] = byte(b);
  }
  return img;
}

}  // namespace msdc
