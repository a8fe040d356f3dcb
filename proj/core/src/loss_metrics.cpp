#include "msdc/loss_metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace msdc {
namespace {

template <typename T>
bool labeled(std::span<const T> gt, std::span<const std::uint8_t> mask, std::size_t i) {
  if (!mask.empty() && mask[i] == 0) return false;
  return gt[i] != T(0);
}

void check_sizes(std::size_t pred, std::size_t gt, std::size_t mask) {
  if (pred != gt || (mask != 0 && mask != gt)) {
    throw ShapeError("prediction (" + std::to_string(pred) + "), ground truth (" + std::to_string(gt) +
                     ") and mask (" + std::to_string(mask) + ") sizes differ");
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < kSmoothL1Critical ? x * x / 3.0 : a;
}

template <typename T>
Var<T> smooth_l1_loss(const Var<T>& pred, const Tensor<T>& gt, std::span<const std::uint8_t> mask) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError("prediction " + shape_str(pred.shape()) + " vs ground truth " + shape_str(gt.shape()));
  }
  check_sizes(static_cast<std::size_t>(pred.value().size()), static_cast<std::size_t>(gt.size()), mask.size());
  const std::span<const T> g = gt.values();
  const std::span<const T> p = pred.value().values();
  std::int64_t count = 0;
  double total = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!labeled(g, mask, i)) continue;
    ++count;
    total += smooth_l1(static_cast<double>(g[i]) - static_cast<double>(p[i]));
  }
  if (count == 0) throw NoLabeledPixels();
  const double inv_n = 1.0 / static_cast<double>(count);

  Mask valid(g.size(), 0);
  for (std::size_t i = 0; i < g.size(); ++i) valid[i] = labeled(g, mask, i) ? 1 : 0;
  return Var<T>::from_op(Tensor<T>(Shape{}, static_cast<T>(total * inv_n)), {pred},
                         [gt, valid = std::move(valid), inv_n](Node<T>& self) {
                           Tensor<T>* dp = self.parent_grad(0);
                           if (!dp) return;
                           const T* p = self.parent_value(0).data();
                           const double up = static_cast<double>(self.grad[0]) * inv_n;
                           for (std::size_t i = 0; i < valid.size(); ++i) {
                             if (!valid[i]) continue;
                             const auto k = static_cast<std::int64_t>(i);
                             const double x = static_cast<double>(gt[k]) - static_cast<double>(p[k]);
                             // d/dpred S(gt - pred) = -S'(x)
                             const double ds = std::abs(x) < kSmoothL1Critical ? 2.0 * x / 3.0 : (x > 0 ? 1.0 : -1.0);
                             (*dp)[k] += static_cast<T>(-ds * up);
                           }
                         });
}

std::string MetricReport::to_key_value() const {
  std::ostringstream os;
  os << "mae=" << fmt(mae) << '\n' << "rms=" << fmt(rms) << '\n';
  for (int k = 1; k <= 5; ++k) os << "gt" << k << '=' << fmt(rate_above(k)) << '\n';
  os << "d1=" << fmt(d1) << '\n' << "n=" << valid_count << '\n';
  return os.str();
}

const char* MetricReport::csv_header() { return "mae,rms,gt1,gt2,gt3,gt4,gt5,d1,n"; }

std::string MetricReport::to_csv_row() const {
  std::ostringstream os;
  os << fmt(mae) << ',' << fmt(rms);
  for (double r : rate_gt) os << ',' << fmt(r);
  os << ',' << fmt(d1) << ',' << valid_count;
  return os.str();
}

template <typename T>
MetricReport disparity_metrics(std::span<const T> pred, std::span<const T> gt, std::span<const std::uint8_t> mask) {
  check_sizes(pred.size(), gt.size(), mask.size());
  MetricReport r;
  std::array<std::int64_t, 5> above{};
  std::int64_t outliers = 0;
  double sum_abs = 0, sum_sq = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!labeled(gt, mask, i)) continue;
    const double g = gt[i];
    const double e = std::abs(static_cast<double>(pred[i]) - g);
    ++r.valid_count;
    sum_abs += e;
    sum_sq += e * e;
    for (int k = 1; k <= 5; ++k) {
      if (e > k) ++above[static_cast<std::size_t>(k - 1)];
    }
    if (e > 3.0 && e > 0.05 * g) ++outliers;
  }
  if (r.valid_count == 0) throw NoLabeledPixels();
  const double n = static_cast<double>(r.valid_count);
  r.mae = sum_abs / n;
  r.rms = std::sqrt(sum_sq / n);
  for (std::size_t k = 0; k < 5; ++k) r.rate_gt[k] = 100.0 * static_cast<double>(above[k]) / n;
  r.d1 = 100.0 * static_cast<double>(outliers) / n;
  return r;
}

template <typename T>
double d1_rate(std::span<const T> pred, std::span<const T> gt, std::span<const std::uint8_t> mask) {
  return disparity_metrics(pred, gt, mask).d1;
}

template Var<float> smooth_l1_loss(const Var<float>&, const Tensor<float>&, std::span<const std::uint8_t>);
template Var<double> smooth_l1_loss(const Var<double>&, const Tensor<double>&, std::span<const std::uint8_t>);
template MetricReport disparity_metrics(std::span<const float>, std::span<const float>, std::span<const std::uint8_t>);
template MetricReport disparity_metrics(std::span<const double>, std::span<const double>,
                                        std::span<const std::uint8_t>);
template double d1_rate(std::span<const float>, std::span<const float>, std::span<const std::uint8_t>);
template double d1_rate(std::span<const double>, std::span<const double>, std::span<const std::uint8_t>);

}  // namespace msdc
