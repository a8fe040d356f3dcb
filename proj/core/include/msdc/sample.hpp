#pragma once

#include <cstdint>
#include <vector>

#include "msdc/png_io.hpp"
#include "msdc/tensor.hpp"

namespace msdc {

/// Rectified pair with ground truth. Images are (3, H, W) in [0, 1]; gt and
/// valid are (H, W), and valid is false wherever gt is 0.
struct StereoSample {
  Tensor<float> left;
  Tensor<float> right;
  Tensor<float> gt;
  Mask valid;

  std::int64_t height() const { return gt.dim(0); }
  std::int64_t width() const { return gt.dim(1); }
  /// Throws when shapes disagree, gt is negative, or a pixel is valid with gt 0.
  void validate() const;
};

/// 8-bit RGB PNG -> (3, H, W), value / 255.
Tensor<float> normalize_image(const PngImage& rgb8);

/// (3, H, W) in [0, 1] -> 8-bit RGB (rounded, clamped).
PngImage to_rgb8(const Tensor<float>& image);

/// Same window for every component; the offset is a pure function of the seed.
StereoSample random_crop(const StereoSample& sample, std::int64_t crop_h, std::int64_t crop_w, std::uint64_t seed);

struct SynthBlock {
  int x = 0, y = 0, w = 0, h = 0;
  int disparity = 0;
};

struct SynthSpec {
  int height = 64;
  int width = 128;
  int background_disparity = 4;
  std::vector<SynthBlock> blocks;  // later blocks are drawn on top
  std::uint64_t seed = 0;

  void validate() const;
};

/// Random-dot pair with exact integer ground truth: the right view is seeded
/// 8-bit noise and left(x, y) = right(x - gt(x, y), y) wherever x - gt >= 0.
/// Pixels that would sample outside the right view are invalid (gt 0).
StereoSample generate_synthetic_pair(const SynthSpec& spec);

/// Background plus one rectangle at a second disparity, both in
/// [1, max_disparity), drawn from the seed.
SynthSpec random_synth_spec(int height, int width, int max_disparity, std::uint64_t seed);

/// Batched views of several equally sized samples.
struct StereoBatch {
  Tensor<float> left;   // (N, 3, H, W)
  Tensor<float> right;  // (N, 3, H, W)
  Tensor<float> gt;     // (N, H, W)
  Mask valid;           // N * H * W
};

StereoBatch stack_samples(const std::vector<const StereoSample*>& samples);

}  // namespace msdc
