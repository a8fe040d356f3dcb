#include "msdc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <stdexcept>

#include "msdc/kitti.hpp"
#include "msdc/pfm.hpp"

namespace fs = std::filesystem;

namespace msdc {
namespace {

/// Fisher-Yates driven by raw 64-bit draws so the order does not depend on
/// the standard library's distribution implementations.
void seeded_shuffle(std::vector<std::int64_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

std::string sample_stem(std::int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04lld", static_cast<long long>(index));
  return buf;
}

void write_dataset(const fs::path& root, const std::vector<StereoSample>& samples) {
  fs::create_directories(root / "left");
  fs::create_directories(root / "right");
  fs::create_directories(root / "disp");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string stem = sample_stem(static_cast<std::int64_t>(i));
    samples[i].validate();
    write_png(root / "left" / (stem + ".png"), to_rgb8(samples[i].left));
    write_png(root / "right" / (stem + ".png"), to_rgb8(samples[i].right));
    write_pfm_file(root / "disp" / (stem + ".pfm"), samples[i].gt);
  }
}

std::vector<StereoSample> read_dataset(const fs::path& root) {
  const fs::path disp_dir = root / "disp";
  if (!fs::is_directory(disp_dir)) throw std::runtime_error("dataset has no disp/ directory: " + root.string());
  std::vector<fs::path> gts;
  for (const auto& entry : fs::directory_iterator(disp_dir)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".pfm" || ext == ".png")) gts.push_back(entry.path());
  }
  std::sort(gts.begin(), gts.end());
  std::vector<StereoSample> out;
  for (const auto& gt_path : gts) {
    const std::string stem = gt_path.stem().string();
    StereoSample s;
    if (gt_path.extension() == ".pfm") {
      s.gt = read_pfm_file(gt_path);
      s.valid.resize(static_cast<std::size_t>(s.gt.size()));
      for (std::int64_t i = 0; i < s.gt.size(); ++i) {
        const float d = s.gt[i];
        if (!std::isfinite(d) || d < 0) s.gt[i] = 0;  // Scene Flow marks holes with inf
        s.valid[static_cast<std::size_t>(i)] = s.gt[i] != 0;
      }
    } else {
      auto [gt, valid] = decode_kitti_disparity(read_png(gt_path));
      s.gt = std::move(gt);
      s.valid = std::move(valid);
    }
    s.left = normalize_image(read_png(root / "left" / (stem + ".png")));
    s.right = normalize_image(read_png(root / "right" / (stem + ".png")));
    s.validate();
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::int64_t> epoch_order(std::int64_t count, std::int64_t epoch, std::uint64_t seed) {
  std::vector<std::int64_t> order(static_cast<std::size_t>(std::max<std::int64_t>(count, 0)));
  std::iota(order.begin(), order.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  seeded_shuffle(order, rng);
  return order;
}

std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>> split_indices(std::int64_t count,
                                                                              double holdout_fraction,
                                                                              std::uint64_t seed) {
  if (holdout_fraction < 0 || holdout_fraction > 1) throw std::invalid_argument("holdout fraction must be in [0, 1]");
  std::vector<std::int64_t> all(static_cast<std::size_t>(count));
  std::iota(all.begin(), all.end(), 0);
  std::mt19937_64 rng(seed);
  seeded_shuffle(all, rng);
  const auto held = static_cast<std::size_t>(std::floor(holdout_fraction * static_cast<double>(count)));
  std::vector<std::int64_t> holdout(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(held));
  std::vector<std::int64_t> train(all.begin() + static_cast<std::ptrdiff_t>(held), all.end());
  std::sort(holdout.begin(), holdout.end());
  std::sort(train.begin(), train.end());
  return {std::move(train), std::move(holdout)};
}

}  // namespace msdc
