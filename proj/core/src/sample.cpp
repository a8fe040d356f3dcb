#include "msdc/sample.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace msdc {

void StereoSample::validate() const {
  if (gt.rank() != 2) throw ShapeError("ground truth must be (H, W), got " + shape_str(gt.shape()));
  const Shape img{3, gt.dim(0), gt.dim(1)};
  if (left.shape() != img || right.shape() != img) {
    throw ShapeError("views " + shape_str(left.shape()) + "/" + shape_str(right.shape()) + " do not match gt " +
                     shape_str(gt.shape()));
  }
  if (static_cast<std::int64_t>(valid.size()) != gt.size()) throw ShapeError("validity map size mismatch");
  for (std::int64_t i = 0; i < gt.size(); ++i) {
    if (gt[i] < 0) throw std::invalid_argument("negative ground-truth disparity");
    if (valid[static_cast<std::size_t>(i)] && gt[i] == 0) throw std::invalid_argument("valid pixel with zero disparity");
  }
}

Tensor<float> normalize_image(const PngImage& rgb8) {
  if (rgb8.channels != 3 || rgb8.bit_depth != 8) throw std::invalid_argument("expected an 8-bit RGB image");
  const std::int64_t H = rgb8.height, W = rgb8.width;
  Tensor<float> out({3, H, W});
  for (std::int64_t y = 0; y < H; ++y) {
    for (std::int64_t x = 0; x < W; ++x) {
      for (std::int64_t c = 0; c < 3; ++c) {
        out[(c * H + y) * W + x] = static_cast<float>(rgb8.samples[static_cast<std::size_t>((y * W + x) * 3 + c)]) / 255.0f;
      }
    }
  }
  return out;
}

PngImage to_rgb8(const Tensor<float>& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("expected (3, H, W), got " + shape_str(image.shape()));
  const std::int64_t H = image.dim(1), W = image.dim(2);
  PngImage out;
  out.width = static_cast<int>(W);
  out.height = static_cast<int>(H);
  out.channels = 3;
  out.bit_depth = 8;
  out.samples.resize(static_cast<std::size_t>(3 * H * W));
  for (std::int64_t y = 0; y < H; ++y) {
    for (std::int64_t x = 0; x < W; ++x) {
      for (std::int64_t c = 0; c < 3; ++c) {
        const double v = std::clamp(static_cast<double>(image[(c * H + y) * W + x]), 0.0, 1.0);
        out.samples[static_cast<std::size_t>((y * W + x) * 3 + c)] = static_cast<std::uint16_t>(std::lround(v * 255.0));
      }
    }
  }
  return out;
}

StereoSample random_crop(const StereoSample& sample, std::int64_t crop_h, std::int64_t crop_w, std::uint64_t seed) {
  const std::int64_t H = sample.height(), W = sample.width();
  if (crop_h < 1 || crop_w < 1 || crop_h > H || crop_w > W) {
    throw std::invalid_argument("crop " + std::to_string(crop_h) + "x" + std::to_string(crop_w) +
                                " does not fit inside " + std::to_string(H) + "x" + std::to_string(W));
  }
  std::mt19937_64 rng(seed);
  const std::int64_t y0 = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(H - crop_h + 1));
  const std::int64_t x0 = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(W - crop_w + 1));

  StereoSample out;
  out.left = Tensor<float>({3, crop_h, crop_w});
  out.right = Tensor<float>({3, crop_h, crop_w});
  out.gt = Tensor<float>({crop_h, crop_w});
  out.valid.resize(static_cast<std::size_t>(crop_h * crop_w));
  for (std::int64_t y = 0; y < crop_h; ++y) {
    for (std::int64_t x = 0; x < crop_w; ++x) {
      const std::int64_t src = (y0 + y) * W + x0 + x;
      const std::int64_t dst = y * crop_w + x;
      out.gt[dst] = sample.gt[src];
      out.valid[static_cast<std::size_t>(dst)] = sample.valid[static_cast<std::size_t>(src)];
      for (std::int64_t c = 0; c < 3; ++c) {
        out.left[c * crop_h * crop_w + dst] = sample.left[c * H * W + src];
        out.right[c * crop_h * crop_w + dst] = sample.right[c * H * W + src];
      }
    }
  }
  return out;
}

void SynthSpec::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("invalid synthetic spec: " + m); };
  if (height < 1 || width < 1) fail("image size must be positive");
  auto check_disp = [&](int d) {
    if (d < 1) fail("disparity " + std::to_string(d) + " must be at least 1 (0 marks missing ground truth)");
    if (d >= width) fail("disparity " + std::to_string(d) + " must be smaller than width " + std::to_string(width));
  };
  check_disp(background_disparity);
  for (const auto& b : blocks) {
    check_disp(b.disparity);
    if (b.w < 1 || b.h < 1 || b.x < 0 || b.y < 0 || b.x + b.w > width || b.y + b.h > height) {
      fail("block at (" + std::to_string(b.x) + ", " + std::to_string(b.y) + ") size " + std::to_string(b.w) + "x" +
           std::to_string(b.h) + " leaves the image");
    }
  }
}

StereoSample generate_synthetic_pair(const SynthSpec& spec) {
  spec.validate();
  const std::int64_t H = spec.height, W = spec.width;
  std::mt19937_64 rng(spec.seed);
  auto noise = [&] { return static_cast<float>(rng() % 256) / 255.0f; };

  std::vector<int> disp(static_cast<std::size_t>(H * W), spec.background_disparity);
  for (const auto& b : spec.blocks) {
    for (int y = b.y; y < b.y + b.h; ++y) {
      for (int x = b.x; x < b.x + b.w; ++x) disp[static_cast<std::size_t>(y * W + x)] = b.disparity;
    }
  }

  StereoSample s;
  s.right = Tensor<float>({3, H, W});
  for (auto& v : s.right.values()) v = noise();
  s.left = Tensor<float>({3, H, W});
  s.gt = Tensor<float>({H, W});
  s.valid.assign(static_cast<std::size_t>(H * W), 0);
  for (std::int64_t y = 0; y < H; ++y) {
    for (std::int64_t x = 0; x < W; ++x) {
      const std::int64_t i = y * W + x;
      const int d = disp[static_cast<std::size_t>(i)];
      const std::int64_t src = x - d;
      if (src >= 0) {
        s.gt[i] = static_cast<float>(d);
        s.valid[static_cast<std::size_t>(i)] = 1;
        for (std::int64_t c = 0; c < 3; ++c) s.left[(c * H + y) * W + x] = s.right[(c * H + y) * W + src];
      } else {
        for (std::int64_t c = 0; c < 3; ++c) s.left[(c * H + y) * W + x] = noise();
      }
    }
  }
  return s;
}

SynthSpec random_synth_spec(int height, int width, int max_disparity, std::uint64_t seed) {
  const int top = std::min(max_disparity, width) - 1;
  if (top < 2) throw std::invalid_argument("need max disparity and width of at least 3 for two disparity levels");
  std::mt19937_64 rng(seed);
  auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1)); };
  SynthSpec spec;
  spec.height = height;
  spec.width = width;
  spec.seed = rng();
  spec.background_disparity = pick(1, top);
  int fg = pick(1, top - 1);
  if (fg >= spec.background_disparity) ++fg;
  SynthBlock b;
  b.w = pick(std::max(1, width / 4), std::max(1, width / 2));
  b.h = pick(std::max(1, height / 4), std::max(1, height / 2));
  b.x = pick(0, width - b.w);
  b.y = pick(0, height - b.h);
  b.disparity = fg;
  spec.blocks.push_back(b);
  return spec;
}

StereoBatch stack_samples(const std::vector<const StereoSample*>& samples) {
  if (samples.empty()) throw std::invalid_argument("cannot stack an empty batch");
  const std::int64_t N = static_cast<std::int64_t>(samples.size());
  const std::int64_t H = samples.front()->height(), W = samples.front()->width();
  StereoBatch b;
  b.left = Tensor<float>({N, 3, H, W});
  b.right = Tensor<float>({N, 3, H, W});
  b.gt = Tensor<float>({N, H, W});
  b.valid.reserve(static_cast<std::size_t>(N * H * W));
  const std::int64_t img = 3 * H * W;
  for (std::int64_t n = 0; n < N; ++n) {
    const StereoSample& s = *samples[static_cast<std::size_t>(n)];
    if (s.height() != H || s.width() != W) throw ShapeError("batch samples differ in size");
    std::copy(s.left.data(), s.left.data() + img, b.left.data() + n * img);
    std::copy(s.right.data(), s.right.data() + img, b.right.data() + n * img);
    std::copy(s.gt.data(), s.gt.data() + H * W, b.gt.data() + n * H * W);
    b.valid.insert(b.valid.end(), s.valid.begin(), s.valid.end());
  }
  return b;
}

}  // namespace msdc
