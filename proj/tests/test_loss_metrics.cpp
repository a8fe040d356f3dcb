#include <gtest/gtest.h>

#include <cmath>

#include "msdc/gradcheck.hpp"
#include "msdc/loss_metrics.hpp"
#include "oracles.hpp"

using namespace msdc;

namespace {

Tensor<double> vec(std::vector<double> v) {
  const auto n = static_cast<std::int64_t>(v.size());
  return Tensor<double>({n}, std::move(v));
}

MetricReport metrics(const std::vector<double>& pred, const std::vector<double>& gt, const Mask& mask = {}) {
  return disparity_metrics<double>(pred, gt, mask);
}

}  // namespace

TEST(SmoothL1, PiecewiseDefinition) {
  EXPECT_EQ(smooth_l1(0.0), 0.0);
  EXPECT_EQ(smooth_l1(1.5), 0.75);
  EXPECT_EQ(smooth_l1(-4.0), 4.0);
}

TEST(SmoothL1, ContinuousAtCriticalPoint) {
  // Both branches give exactly 3 at |x| = 3.
  EXPECT_EQ(smooth_l1(3.0), 3.0);
  EXPECT_EQ(smooth_l1(-3.0), 3.0);
  EXPECT_EQ(3.0 * 3.0 / 3.0, 3.0);
  const double below = std::nextafter(3.0, 0.0);
  EXPECT_NEAR(smooth_l1(below), 3.0, 1e-14);
}

TEST(SmoothL1Loss, PerfectPredictionIsZero) {
  const auto gt = vec({1, 2, 3});
  EXPECT_EQ(smooth_l1_loss(Var<double>(gt), gt).value()[0], 0.0);
}

TEST(SmoothL1Loss, HandExample) {
  const auto loss = smooth_l1_loss(Var<double>(vec({6, 99})), vec({4, 0}));
  EXPECT_NEAR(loss.value()[0], 4.0 / 3.0, 1e-12);
}

TEST(SmoothL1Loss, UnlabeledPixelsGetNoGradient) {
  Var<double> pred(vec({6, 99, 1, 5}), true);
  const Mask mask{1, 1, 0, 1};
  backward(smooth_l1_loss(pred, vec({4, 0, 2, 5}), mask));
  EXPECT_NE(pred.grad()[0], 0.0);
  EXPECT_EQ(pred.grad()[1], 0.0);  // gt == 0
  EXPECT_EQ(pred.grad()[2], 0.0);  // masked out
}

TEST(SmoothL1Loss, NoLabeledPixelsIsAnError) {
  EXPECT_THROW(smooth_l1_loss(Var<double>(vec({1, 2})), vec({0, 0})), NoLabeledPixels);
  const Mask none{0, 0};
  EXPECT_THROW(smooth_l1_loss(Var<double>(vec({1, 2})), vec({1, 1}), none), NoLabeledPixels);
}

TEST(SmoothL1Loss, SymmetricInResidualSign) {
  std::mt19937_64 rng(1);
  const auto gt = msdc::testing::random_tensor<double>({40}, rng, 1, 50);
  const auto r = msdc::testing::random_tensor<double>({40}, rng, -8, 8);
  Tensor<double> up(gt.shape()), down(gt.shape());
  for (std::int64_t i = 0; i < gt.size(); ++i) {
    up[i] = gt[i] + r[i];
    down[i] = gt[i] - r[i];
  }
  EXPECT_EQ(smooth_l1_loss(Var<double>(up), gt).value()[0], smooth_l1_loss(Var<double>(down), gt).value()[0]);
}

TEST(SmoothL1Loss, GradientMatchesFiniteDifferencesNearCriticalPoint) {
  // Residuals on both sides of |x| = 3, plus some unlabeled pixels.
  Tensor<double> gt = vec({5, 5, 5, 5, 0, 7, 7, 7}), pred = vec({2.01, 1.99, 8.01, 7.99, 3, 7.5, 12, 3.2});
  GradCheckOptions o;
  const auto rep = grad_check([&](const std::vector<Var<double>>& v) { return smooth_l1_loss(v[0], gt); }, {pred}, 1e-6, o);
  EXPECT_TRUE(rep.passed) << rep.summary();
}

TEST(Metrics, HandExample) {
  const auto m = metrics({12, 5, 26}, {10, 0, 20});
  EXPECT_EQ(m.valid_count, 2);
  EXPECT_EQ(m.rate_above(3), 50.0);
  EXPECT_EQ(m.mae, 4.0);
  EXPECT_NEAR(m.rms, std::sqrt(20.0), 1e-15);
}

TEST(Metrics, PerfectPrediction) {
  const auto m = metrics({3, 0, 7}, {3, 0, 7});
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_EQ(m.rms, 0.0);
  for (int k = 1; k <= 5; ++k) EXPECT_EQ(m.rate_above(k), 0.0);
  EXPECT_EQ(m.d1, 0.0);
}

TEST(Metrics, D1Rule) {
  EXPECT_EQ(d1_rate<double>(std::vector<double>{104}, std::vector<double>{100}), 0.0);
  EXPECT_EQ(d1_rate<double>(std::vector<double>{14}, std::vector<double>{10}), 100.0);
}

TEST(Metrics, EmptyValidSetIsAnError) {
  EXPECT_THROW(metrics({1, 2}, {0, 0}), NoLabeledPixels);
  EXPECT_THROW(d1_rate<double>(std::vector<double>{1}, std::vector<double>{2}, Mask{0}), NoLabeledPixels);
}

TEST(Metrics, MatchBruteForceAndInvariants) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 40);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> pred(64), gt(64);
    Mask mask(64);
    for (int i = 0; i < 64; ++i) {
      gt[static_cast<std::size_t>(i)] = rng() % 5 == 0 ? 0.0 : u(rng);
      pred[static_cast<std::size_t>(i)] = u(rng);
      mask[static_cast<std::size_t>(i)] = rng() % 4 != 0;
    }
    const auto ref = msdc::testing::naive_metrics(pred, gt, mask);
    if (ref.n == 0) continue;
    const auto m = metrics(pred, gt, mask);
    EXPECT_EQ(m.valid_count, ref.n);
    EXPECT_EQ(m.mae, ref.mae);
    EXPECT_EQ(m.rms, ref.rms);
    for (int k = 1; k <= 5; ++k) EXPECT_EQ(m.rate_above(k), ref.rates[k - 1]);
    for (int k = 1; k < 5; ++k) EXPECT_GE(m.rate_above(k), m.rate_above(k + 1));
    EXPECT_EQ(m.d1, ref.d1);
    EXPECT_LE(m.d1, m.rate_above(3));
    for (int k = 1; k <= 5; ++k) {
      EXPECT_GE(m.rate_above(k), 0.0);
      EXPECT_LE(m.rate_above(k), 100.0);
    }
  }
}

TEST(MetricReport, Serialization) {
  const auto m = metrics({12, 5, 26}, {10, 0, 20});
  EXPECT_STREQ(MetricReport::csv_header(), "mae,rms,gt1,gt2,gt3,gt4,gt5,d1,n");
  const std::string row = m.to_csv_row();
  EXPECT_EQ(row.substr(0, 2), "4,");
  EXPECT_EQ(row.substr(row.size() - 2), ",2");
  const std::string kv = m.to_key_value();
  EXPECT_NE(kv.find("mae=4\n"), std::string::npos) << kv;
  EXPECT_NE(kv.find("gt3=50\n"), std::string::npos) << kv;
}
