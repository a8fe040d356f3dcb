#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <map>
#include <set>

#include "msdc/colormap.hpp"
#include "msdc/dataset.hpp"
#include "msdc/loss_metrics.hpp"
#include "msdc/kitti.hpp"
#include "msdc/pfm.hpp"
#include "oracles.hpp"

using namespace msdc;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

void append_f32(std::vector<std::uint8_t>& out, float v) {
  std::uint8_t b[4];
  std::memcpy(b, &v, 4);
  out.insert(out.end(), b, b + 4);
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("msdc_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Pfm, RoundTripIsBitExact) {
  std::mt19937_64 rng(1);
  auto t = msdc::testing::random_tensor<float>({2, 3}, rng, -100, 100);
  t[4] = std::numeric_limits<float>::infinity();
  EXPECT_TRUE(read_pfm(write_pfm(t)).identical(t));
}

TEST(Pfm, HeaderArithmeticAndRowOrder) {
  auto b = bytes_of("Pf\n3 2\n-1.0\n");
  for (int i = 0; i < 6; ++i) append_f32(b, static_cast<float>(i));
  const auto t = read_pfm(b);
  ASSERT_EQ(t.shape(), (Shape{2, 3}));
  EXPECT_EQ(t.at(1, 0), 0.0f);  // first stored row is the bottom row
  EXPECT_EQ(t.at(0, 2), 5.0f);
}

TEST(Pfm, BigEndianPayload) {
  auto b = bytes_of("Pf\n1 1\n1.0\n");
  const std::uint8_t be_two[4] = {0x40, 0x00, 0x00, 0x00};
  b.insert(b.end(), be_two, be_two + 4);
  EXPECT_EQ(read_pfm(b)[0], 2.0f);
}

TEST(Pfm, DistinctErrors) {
  auto code = [](const std::vector<std::uint8_t>& b) {
    try {
      read_pfm(b);
    } catch (const PfmError& e) {
      return e.code();
    }
    ADD_FAILURE() << "no error";
    return PfmErrorCode::bad_header;
  };
  auto payload = bytes_of("Pf\n3 2\n-1.0\n");
  payload.resize(payload.size() + 23);
  EXPECT_EQ(code(payload), PfmErrorCode::truncated_payload);
  try {
    read_pfm(payload);
  } catch (const PfmError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated payload"), std::string::npos);
  }
  EXPECT_EQ(code(bytes_of("PF\n1 1\n-1.0\nxxxx")), PfmErrorCode::bad_magic);
  EXPECT_EQ(code(bytes_of("Pf\n1 1\n0.0\nxxxx")), PfmErrorCode::zero_scale);
  EXPECT_EQ(code(bytes_of("Pf\nx 1\n-1.0\nxxxx")), PfmErrorCode::bad_header);
}

TEST(Png, RoundTrip8And16Bit) {
  PngImage rgb{5, 3, 3, 8, {}};
  PngImage gray{4, 2, 1, 16, {}};
  for (int i = 0; i < 45; ++i) rgb.samples.push_back(static_cast<std::uint16_t>(i * 5));
  for (int i = 0; i < 8; ++i) gray.samples.push_back(static_cast<std::uint16_t>(i * 8191));
  for (const auto& img : {rgb, gray}) {
    const auto back = decode_png(encode_png(img));
    EXPECT_EQ(back.width, img.width);
    EXPECT_EQ(back.height, img.height);
    EXPECT_EQ(back.channels, img.channels);
    EXPECT_EQ(back.bit_depth, img.bit_depth);
    EXPECT_EQ(back.samples, img.samples);
    EXPECT_EQ(encode_png(img), encode_png(img));
  }
  EXPECT_THROW(decode_png({1, 2, 3}), std::runtime_error);
}

TEST(Kitti, StoredUnits) {
  PngImage img{3, 1, 1, 16, {512, 0, 1}};
  const auto [gt, valid] = decode_kitti_disparity(img);
  EXPECT_EQ(gt[0], 2.0f);
  EXPECT_TRUE(valid[0]);
  EXPECT_EQ(gt[1], 0.0f);
  EXPECT_FALSE(valid[1]);
  EXPECT_EQ(gt[2], 1.0f / 256.0f);
  EXPECT_EQ(encode_kitti_disparity(Tensor<float>({1, 1}, std::vector<float>{2.0f}), {}).samples[0], 512);
  EXPECT_THROW(decode_kitti_disparity(PngImage{1, 1, 1, 8, {3}}), std::invalid_argument);
}

TEST(Kitti, QuantizationRoundTrip) {
  std::mt19937_64 rng(2);
  const auto d = msdc::testing::random_tensor<float>({6, 7}, rng, 0.01, 250);
  Mask valid(42);
  for (auto& v : valid) v = rng() % 3 != 0;
  const auto [back, back_valid] = decode_kitti_disparity(decode_png(encode_png(encode_kitti_disparity(d, valid))));
  for (std::size_t i = 0; i < valid.size(); ++i) {
    EXPECT_EQ(back_valid[i], valid[i]);
    if (valid[i]) EXPECT_LE(std::abs(back[static_cast<std::int64_t>(i)] - d[static_cast<std::int64_t>(i)]), 1.0 / 512.0);
    else EXPECT_EQ(back[static_cast<std::int64_t>(i)], 0.0f);
  }
}

TEST(NormalizeImage, DividesBy255) {
  PngImage img{1, 1, 3, 8, {255, 0, 128}};
  const auto t = normalize_image(img);
  EXPECT_EQ(t[0], 1.0f);
  EXPECT_EQ(t[1], 0.0f);
  EXPECT_EQ(t[2], 128.0f / 255.0f);
  EXPECT_EQ(to_rgb8(t).samples, img.samples);
}

TEST(RandomCrop, ShapesDeterminismAndIdentity) {
  StereoSample s;
  std::mt19937_64 rng(3);
  s.left = msdc::testing::random_tensor<float>({3, 375, 1242}, rng, 0, 1);
  s.right = msdc::testing::random_tensor<float>({3, 375, 1242}, rng, 0, 1);
  s.gt = msdc::testing::random_tensor<float>({375, 1242}, rng, 1, 100);
  s.valid.assign(375 * 1242, 1);
  const auto a = random_crop(s, 256, 512, 9), b = random_crop(s, 256, 512, 9);
  EXPECT_EQ(a.left.shape(), (Shape{3, 256, 512}));
  EXPECT_EQ(a.gt.shape(), (Shape{256, 512}));
  EXPECT_TRUE(a.left.identical(b.left));
  EXPECT_TRUE(a.gt.identical(b.gt));
  const auto full = random_crop(s, 375, 1242, 4);
  EXPECT_TRUE(full.left.identical(s.left));
  EXPECT_TRUE(full.right.identical(s.right));
  EXPECT_THROW(random_crop(s, 400, 512, 1), std::invalid_argument);
}

TEST(Synthetic, HistogramWarpingAndInvalidColumns) {
  SynthSpec spec;
  spec.height = 32;
  spec.width = 64;
  spec.background_disparity = 4;
  spec.blocks.push_back({20, 8, 16, 12, 10});
  spec.seed = 5;
  const auto s = generate_synthetic_pair(spec);
  s.validate();
  std::set<float> levels;
  const std::int64_t H = 32, W = 64;
  for (std::int64_t y = 0; y < H; ++y) {
    std::int64_t invalid_prefix = 0;
    for (std::int64_t x = 0; x < W; ++x) {
      const std::int64_t i = y * W + x;
      if (!s.valid[static_cast<std::size_t>(i)]) {
        EXPECT_EQ(s.gt[i], 0.0f);
        EXPECT_EQ(invalid_prefix, x) << "invalid pixels must form a left border run";
        ++invalid_prefix;
        continue;
      }
      levels.insert(s.gt[i]);
      const auto d = static_cast<std::int64_t>(s.gt[i]);
      ASSERT_GE(x - d, 0);
      for (std::int64_t c = 0; c < 3; ++c) EXPECT_EQ(s.left[(c * H + y) * W + x], s.right[(c * H + y) * W + x - d]);
    }
    EXPECT_EQ(invalid_prefix, 4);  // background disparity 4 in every row's left border
  }
  EXPECT_EQ(levels, (std::set<float>{4.0f, 10.0f}));
}

TEST(Synthetic, RejectsBadSpecs) {
  SynthSpec spec;
  spec.width = 16;
  spec.background_disparity = 16;
  EXPECT_THROW(generate_synthetic_pair(spec), std::invalid_argument);
  spec.background_disparity = 3;
  spec.blocks.push_back({10, 0, 10, 4, 2});
  EXPECT_THROW(generate_synthetic_pair(spec), std::invalid_argument);
}

TEST(Synthetic, RandomSpecsHaveTwoLevels) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto spec = random_synth_spec(64, 128, 32, seed);
    ASSERT_EQ(spec.blocks.size(), 1u);
    EXPECT_NE(spec.blocks[0].disparity, spec.background_disparity);
    EXPECT_GE(std::min(spec.blocks[0].disparity, spec.background_disparity), 1);
    EXPECT_LE(std::max(spec.blocks[0].disparity, spec.background_disparity), 31);
    EXPECT_NO_THROW(spec.validate());
  }
}

TEST(Synthetic, CheatingPredictorScoresZero) {
  const auto s = generate_synthetic_pair(random_synth_spec(32, 64, 16, 3));
  const auto m = disparity_metrics<float>(s.gt.values(), s.gt.values(), s.valid);
  EXPECT_EQ(m.mae, 0.0);
  for (int k = 1; k <= 5; ++k) EXPECT_EQ(m.rate_above(k), 0.0);
}

TEST(Dataset, WriteReadRoundTrip) {
  const fs::path dir = temp_dir("dataset");
  std::vector<StereoSample> samples;
  for (int i = 0; i < 3; ++i) samples.push_back(generate_synthetic_pair(random_synth_spec(16, 32, 8, 10 + i)));
  write_dataset(dir, samples);
  EXPECT_TRUE(fs::exists(dir / "left" / "0002.png"));
  EXPECT_TRUE(fs::exists(dir / "disp" / "0000.pfm"));
  const auto back = read_dataset(dir);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_TRUE(back[i].left.identical(samples[i].left));
    EXPECT_TRUE(back[i].right.identical(samples[i].right));
    EXPECT_TRUE(back[i].gt.identical(samples[i].gt));
    EXPECT_EQ(back[i].valid, samples[i].valid);
  }
  fs::remove_all(dir);
}

TEST(Dataset, EpochOrderIsSeededPermutation) {
  const auto a = epoch_order(10, 3, 7), b = epoch_order(10, 3, 7), c = epoch_order(10, 4, 7);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  std::vector<std::int64_t> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::int64_t i = 0; i < 10; ++i) EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);
}

TEST(Dataset, SplitIsDisjointAndComplete) {
  const auto [train, hold] = split_indices(200, 0.2, 4);
  EXPECT_EQ(hold.size(), 40u);
  EXPECT_EQ(train.size(), 160u);
  std::set<std::int64_t> all(train.begin(), train.end());
  for (auto i : hold) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), 200u);
  EXPECT_EQ(split_indices(200, 0.2, 4), split_indices(200, 0.2, 4));
}

TEST(Colormap, RampEndpointsAndSentinel) {
  Tensor<float> d({1, 4}, std::vector<float>{0.0f, 40.0f, 20.0f, 5.0f});
  const Mask valid{1, 1, 1, 0};
  const auto img = render_colormap(d, 40.0, valid);
  auto px = [&](int i) {
    return std::vector<int>{img.samples[3 * i], img.samples[3 * i + 1], img.samples[3 * i + 2]};
  };
  EXPECT_EQ(px(0), (std::vector<int>{0, 0, 255}));
  EXPECT_EQ(px(1), (std::vector<int>{255, 0, 0}));
  EXPECT_EQ(px(2), (std::vector<int>{0, 255, 0}));
  EXPECT_EQ(px(3), (std::vector<int>{0, 0, 0}));
  EXPECT_EQ(render_colormap(d, 40.0, valid).samples, img.samples);
  EXPECT_THROW(render_colormap(d, 0.0), std::invalid_argument);
}
