#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "msdc/gradcheck.hpp"
#include "msdc/model.hpp"
#include "oracles.hpp"

using namespace msdc;
using msdc::testing::random_tensor;

namespace {

Var<double> leaf(Tensor<double> t) { return Var<double>(std::move(t), false); }

ModelConfig small_config(int F, int D, int levels, Variant v = Variant::full) {
  ModelConfig c = ModelConfig::with_base(F, D);
  c.dense_block_depth = 2;
  c.dense_groups = 2;
  c.levels_3d = levels;
  c.variant = v;
  return c;
}

const Variant kVariants[] = {Variant::full, Variant::single_scale_2d, Variant::single_scale_3d,
                             Variant::single_scale_both};

}  // namespace

TEST(ModelConfig, DefaultsAndValidation) {
  const ModelConfig c;
  EXPECT_EQ(c.base_channels, 32);
  EXPECT_EQ(c.max_disparity, 192);
  EXPECT_EQ(c.dense_groups * c.dense_block_depth, 16);
  EXPECT_EQ(c.fusion_channels, 128);
  EXPECT_EQ(c.levels_3d, 4);
  ModelConfig bad = c;
  bad.max_disparity = 30;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(ModelConfig, RejectsIndivisibleInputWithDivisor) {
  const ModelConfig c = ModelConfig::with_base(8, 32);
  EXPECT_NO_THROW(c.check_input(64, 128));
  try {
    c.check_input(60, 128);
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find(std::to_string(c.spatial_divisor())), std::string::npos) << e.what();
  }
}

TEST(ModelConfig, VariantNames) {
  EXPECT_EQ(parse_variant("full"), Variant::full);
  EXPECT_EQ(parse_variant("2d"), Variant::single_scale_2d);
  EXPECT_EQ(parse_variant("3d"), Variant::single_scale_3d);
  EXPECT_EQ(parse_variant("both"), Variant::single_scale_both);
  for (Variant v : kVariants) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_THROW(parse_variant("half"), std::invalid_argument);
}

TEST(CountParams, SingleConvolutionByHand) {
  LayerSpec s{"c", LayerSpec::Kind::conv2d, 1, 2, 3, 1, true, false, false};
  EXPECT_EQ(s.param_count(), 2 * 9 + 2);
  EXPECT_EQ(count_params(std::vector<LayerSpec>{s}), 20);
}

TEST(CountParams, MatchesInitializedScalarsForEveryVariant) {
  for (Variant v : kVariants) {
    ModelConfig c = ModelConfig::with_base(8, 32);
    c.variant = v;
    const auto params = init_params<float>(c, 1);
    EXPECT_EQ(count_params(c), params.scalar_count()) << to_string(v);
    std::set<std::string> names;
    for (const auto& p : params.params()) EXPECT_TRUE(names.insert(p.name).second) << p.name;
  }
}

TEST(CountParams, FullConfigNearReference) {
  const std::int64_t n = count_params(ModelConfig{});
  EXPECT_GT(n, 3'000'000);
  EXPECT_LT(n, 7'000'000);
}

TEST(InitParams, SeededAndBatchNormNeutral) {
  const ModelConfig c = small_config(4, 8, 2);
  const auto a = init_params<float>(c, 5), b = init_params<float>(c, 5), d = init_params<float>(c, 6);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(a.params()[i].value().identical(b.params()[i].value()));
    differs = differs || !a.params()[i].value().identical(d.params()[i].value());
    const auto& name = a.params()[i].name;
    for (float v : a.params()[i].value().values()) {
      if (name.ends_with("bn.gamma")) {
        EXPECT_EQ(v, 1.0f);
      } else if (name.ends_with("bn.beta") || name.ends_with(".bias")) {
        EXPECT_EQ(v, 0.0f);
      }
    }
  }
  EXPECT_TRUE(differs);
}

TEST(ExtractFeatures, QuarterScaleForEveryVariant) {
  std::mt19937_64 rng(1);
  const auto l = random_tensor<double>({1, 3, 64, 128}, rng, 0, 1), r = random_tensor<double>({1, 3, 64, 128}, rng, 0, 1);
  for (Variant v : kVariants) {
    ModelConfig c = ModelConfig::with_base(32, 32);
    c.variant = v;
    NoGradGuard ng;
    auto ps = init_params<double>(c, 2);
    auto [lf, rf] = extract_features(leaf(l), leaf(r), ps, c, NormMode::train);
    EXPECT_EQ(lf.shape(), (Shape{1, 32, 16, 32})) << to_string(v);
    EXPECT_EQ(rf.shape(), (Shape{1, 32, 16, 32})) << to_string(v);
  }
}

TEST(ExtractFeatures, SiameseWeightsGiveIdenticalFeatures) {
  std::mt19937_64 rng(2);
  const auto img = random_tensor<float>({2, 3, 32, 32}, rng, 0, 1);
  const ModelConfig c = small_config(4, 8, 2);
  auto ps = init_params<float>(c, 3);
  NoGradGuard ng;
  auto [lf, rf] = extract_features(Var<float>(img), Var<float>(img), ps, c, NormMode::train);
  EXPECT_TRUE(lf.value().identical(rf.value()));
}

TEST(CostVolume, HandExample) {
  // F=1, W=3: left [a,b,c] = [1,2,3], right [p,q,r] = [4,5,6], D/4 = 2.
  const auto l = leaf(Tensor<double>({1, 1, 1, 3}, std::vector<double>{1, 2, 3}));
  const auto r = leaf(Tensor<double>({1, 1, 1, 3}, std::vector<double>{4, 5, 6}));
  const auto v = build_cost_volume(l, r, 8).value();
  ASSERT_EQ(v.shape(), (Shape{1, 2, 2, 1, 3}));
  const double d0[2][3] = {{1, 2, 3}, {4, 5, 6}}, d1[2][3] = {{1, 2, 3}, {0, 4, 5}};
  for (int c = 0; c < 2; ++c)
    for (int x = 0; x < 3; ++x) {
      EXPECT_EQ(v.at(0, c, 0, 0, x), d0[c][x]);
      EXPECT_EQ(v.at(0, c, 1, 0, x), d1[c][x]);
    }
  EXPECT_THROW(build_cost_volume(l, r, 6), std::invalid_argument);
}

TEST(CostVolume, ZeroShiftIsChannelConcat) {
  std::mt19937_64 rng(4);
  const auto l = random_tensor<double>({2, 3, 4, 5}, rng), r = random_tensor<double>({2, 3, 4, 5}, rng);
  const auto v = build_cost_volume(leaf(l), leaf(r), 12).value();
  const auto cat = concat<double>({leaf(l), leaf(r)}, 1).value();
  for (std::int64_t n = 0; n < 2; ++n)
    for (std::int64_t c = 0; c < 6; ++c)
      for (std::int64_t y = 0; y < 4; ++y)
        for (std::int64_t x = 0; x < 5; ++x) EXPECT_EQ(v.at(n, c, 0, y, x), cat.at(n, c, y, x));
}

TEST(CostVolume, MatchesNaiveLoop) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 40; ++trial) {
    const std::int64_t F = 1 + trial % 3, H = 1 + trial % 6, W = 1 + trial % 8, levels = 1 + trial % 4;
    const auto l = random_tensor<float>({1, F, H, W}, rng), r = random_tensor<float>({1, F, H, W}, rng);
    const auto v = build_cost_volume(Var<float>(l), Var<float>(r), static_cast<int>(4 * levels)).value();
    EXPECT_TRUE(v.identical(msdc::testing::naive_cost_volume(l, r, levels))) << trial;
  }
}

TEST(MatchFeatures, PreservesShape) {
  std::mt19937_64 rng(3);
  const ModelConfig c = ModelConfig::with_base(32, 32);
  auto ps = init_params<float>(c, 1);
  NoGradGuard ng;
  const auto out = match_features(Var<float>(random_tensor<float>({1, 64, 8, 16, 32}, rng)), ps, c, NormMode::train);
  EXPECT_EQ(out.shape(), (Shape{1, 64, 8, 16, 32}));
}

TEST(MatchFeatures, ZeroedSecondConvolutionsMakeResidualsIdentity) {
  ModelConfig c = small_config(2, 16, 2, Variant::single_scale_3d);
  auto ps = init_params<double>(c, 4);
  for (auto& p : ps.params()) {
    if (p.name.starts_with("match.res") && p.name.find(".b.") != std::string::npos) p.mutable_value().fill(0.0);
  }
  std::mt19937_64 rng(5);
  const auto x = random_tensor<double>({1, 4, 4, 4, 4}, rng);
  const auto out = match_features(leaf(x), ps, c, NormMode::infer).value();

  Tensor<double> rm = ps.buffer("match.entry.bn.running_mean"), rv = ps.buffer("match.entry.bn.running_var");
  BatchNormOptions o;
  o.mode = NormMode::infer;
  const auto trunk = relu(batch_norm(convolve(leaf(x), ps.at("match.entry.weight").var, Var<double>{}, 3, 1, 1),
                                     ps.at("match.entry.bn.gamma").var, ps.at("match.entry.bn.beta").var, rm, rv, o));
  const auto ref = convolve(trunk, ps.at("match.exit.weight").var, ps.at("match.exit.bias").var, 3, 1, 1).value();
  ASSERT_EQ(out.shape(), ref.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-12);
}

TEST(MatchFeatures, GradientCheckTwoLevels) {
  const ModelConfig c = small_config(2, 16, 2);
  auto base = init_params<double>(c, 6);
  std::vector<std::size_t> idx;
  std::vector<Tensor<double>> inputs;
  std::mt19937_64 rng(7);
  inputs.push_back(random_tensor<double>({1, 4, 4, 8, 8}, rng));
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (base.params()[i].name.starts_with("match.")) {
      idx.push_back(i);
      inputs.push_back(base.params()[i].value());
    }
  }
  GradCheckOptions o;
  o.max_probes_per_input = 8;
  o.skip_nonsmooth = true;
  const auto rep = grad_check(
      [&](const std::vector<Var<double>>& v) {
        auto ps = base.clone();
        for (std::size_t k = 0; k < idx.size(); ++k) ps.rebind(idx[k], v[k + 1]);
        return match_features(v[0], ps, c, NormMode::train);
      },
      inputs, 1e-4, o);
  EXPECT_TRUE(rep.passed) << rep.summary();
}

TEST(RecoverScale, ShapeZeroWeightsAndGradient) {
  std::mt19937_64 rng(8);
  {
    const ModelConfig c = ModelConfig::with_base(32, 32);
    auto ps = init_params<float>(c, 1);
    NoGradGuard ng;
    const auto out = recover_scale(Var<float>(random_tensor<float>({1, 64, 8, 16, 32}, rng)), ps, c, NormMode::train);
    EXPECT_EQ(out.shape(), (Shape{1, 32, 64, 128}));
    for (auto& p : ps.params()) p.mutable_value().fill(0.0f);
    const auto zero = recover_scale(Var<float>(random_tensor<float>({1, 64, 8, 16, 32}, rng)), ps, c, NormMode::train);
    for (float v : zero.value().values()) EXPECT_EQ(v, 0.0f);
  }
  const ModelConfig c = small_config(2, 8, 2);
  auto base = init_params<double>(c, 2);
  std::vector<Tensor<double>> inputs{random_tensor<double>({1, 4, 2, 4, 4}, rng), base.at("recover.up1.weight").value(),
                                     base.at("recover.up1.bn.gamma").value(), base.at("recover.up1.bn.beta").value(),
                                     base.at("recover.up2.weight").value()};
  GradCheckOptions o;
  o.skip_nonsmooth = true;
  const auto rep = grad_check(
      [&](const std::vector<Var<double>>& v) {
        auto ps = base.clone();
        const char* names[] = {"recover.up1.weight", "recover.up1.bn.gamma", "recover.up1.bn.beta", "recover.up2.weight"};
        for (std::size_t k = 0; k < 4; ++k) {
          for (std::size_t i = 0; i < ps.size(); ++i)
            if (ps.params()[i].name == names[k]) ps.rebind(i, v[k + 1]);
        }
        return recover_scale(v[0], ps, c, NormMode::train);
      },
      inputs, 1e-4, o);
  EXPECT_TRUE(rep.passed) << rep.summary();
}

TEST(SoftArgmin, ContractExamples) {
  const auto uniform = soft_argmin(leaf(Tensor<double>::full({1, 4, 2, 2}, 0.3))).value();
  for (double v : uniform.values()) EXPECT_EQ(v, 1.5);

  Tensor<double> peaked({1, 4, 1, 1}, std::vector<double>{20, 20, -20, 20});
  EXPECT_NEAR(soft_argmin(leaf(peaked)).value()[0], 2.0, 1e-6);

  Tensor<double> two({1, 2, 1, 1}, std::vector<double>{0.0, -std::log(3.0)});
  EXPECT_NEAR(soft_argmin(leaf(two)).value()[0], 0.75, 1e-15);
}

TEST(SoftArgmin, RangeAndShiftInvariance) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    auto c = random_tensor<double>({2, 9, 3, 4}, rng, -30, 30);
    const auto d = soft_argmin(leaf(c)).value();
    for (double v : d.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 8.0);
    }
    for (auto& v : c.values()) v += 17.25;
    const auto shifted = soft_argmin(leaf(c)).value();
    for (std::int64_t i = 0; i < d.size(); ++i) EXPECT_NEAR(shifted[i], d[i], 1e-9);
  }
}

TEST(Forward, RangeOnEveryVariant) {
  std::mt19937_64 rng(11);
  const auto l = random_tensor<float>({1, 3, 64, 128}, rng, 0, 1), r = random_tensor<float>({1, 3, 64, 128}, rng, 0, 1);
  for (Variant v : kVariants) {
    ModelConfig c = ModelConfig::with_base(8, 32);
    c.variant = v;
    auto ps = init_params<float>(c, 1);
    NoGradGuard ng;
    const auto d = forward(Var<float>(l), Var<float>(r), ps, c, NormMode::train).value();
    EXPECT_EQ(d.shape(), (Shape{1, 64, 128}));
    for (float x : d.values()) {
      ASSERT_TRUE(std::isfinite(x));
      ASSERT_GE(x, 0.0f);
      ASSERT_LE(x, 31.0f);
    }
  }
}

TEST(Forward, EveryParameterReceivesGradient) {
  std::mt19937_64 rng(12);
  for (Variant v : kVariants) {
    const ModelConfig c = small_config(4, 8, 2, v);
    auto ps = init_params<double>(c, 3);
    const auto l = random_tensor<double>({1, 3, 16, 32}, rng, 0, 1), r = random_tensor<double>({1, 3, 16, 32}, rng, 0, 1);
    backward(mean(forward(leaf(l), leaf(r), ps, c, NormMode::train)));
    for (const auto& p : ps.params()) {
      double mag = 0;
      for (double g : p.grad().values()) mag += std::abs(g);
      EXPECT_GT(mag, 0.0) << to_string(v) << " " << p.name;
    }
  }
}

TEST(SoftArgmin, FloatStaysInsideRangeAtOneHotEdges) {
  for (int D : {32, 192}) {
    Tensor<float> c({1, D, 1, 2}, 60.0f);
    c.at(0, D - 1, 0, 0) = 0.0f;
    c.at(0, 0, 0, 1) = 0.0f;
    const auto d = soft_argmin(Var<float>(c)).value();
    EXPECT_LE(d[0], static_cast<float>(D - 1));
    EXPECT_NEAR(d[0], D - 1, 1e-3);
    EXPECT_GE(d[1], 0.0f);
  }
}
