#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

#include "msdc/autograd.hpp"

namespace msdc {

/// Raised when no pixel carries ground truth.
class NoLabeledPixels : public std::runtime_error {
 public:
  NoLabeledPixels() : std::runtime_error("no labeled pixels") {}
};

/// Critical point of the piecewise loss: quadratic (x^2 / 3) below, absolute above.
inline constexpr double kSmoothL1Critical = 3.0;

/// Per-pixel penalty: x^2 / 3 when |x| < 3, |x| otherwise.
double smooth_l1(double residual);

/// Mean penalty of (gt - pred) over labeled pixels. A pixel is labeled when
/// gt != 0 and, if a mask is given, mask != 0. Unlabeled pixels get no
/// gradient. Throws NoLabeledPixels when nothing is labeled.
template <typename T>
Var<T> smooth_l1_loss(const Var<T>& pred, const Tensor<T>& gt, std::span<const std::uint8_t> mask = {});

struct MetricReport {
  double mae = 0;                     // px
  double rms = 0;                     // px
  std::array<double, 5> rate_gt{};    // % of pixels with error > k px, k = 1..5
  double d1 = 0;                      // % outliers: error > 3 px and > 5% of gt
  std::int64_t valid_count = 0;

  double rate_above(int k) const { return rate_gt.at(static_cast<std::size_t>(k - 1)); }

  /// "mae=...\nrms=...\n..." one key per line.
  std::string to_key_value() const;
  static const char* csv_header();  // mae,rms,gt1,gt2,gt3,gt4,gt5,d1,n
  std::string to_csv_row() const;
};

/// Metrics over labeled pixels (gt != 0 and, when given, mask != 0).
/// Throws NoLabeledPixels on an empty valid set.
template <typename T>
MetricReport disparity_metrics(std::span<const T> pred, std::span<const T> gt, std::span<const std::uint8_t> mask = {});

template <typename T>
double d1_rate(std::span<const T> pred, std::span<const T> gt, std::span<const std::uint8_t> mask = {});

}  // namespace msdc
