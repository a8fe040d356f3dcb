#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "msdc/sample.hpp"

namespace msdc {

/// "0007" for index 7.
std::string sample_stem(std::int64_t index);

/// Writes left/NNNN.png, right/NNNN.png (8-bit RGB) and disp/NNNN.pfm.
void write_dataset(const std::filesystem::path& root, const std::vector<StereoSample>& samples);

/// Reads every disp/NNNN.pfm (or KITTI-style disp/NNNN.png) with its views,
/// in index order. Validity is gt != 0 for PFM ground truth.
std::vector<StereoSample> read_dataset(const std::filesystem::path& root);

/// Visiting order for one epoch; a pure function of (epoch, seed).
std::vector<std::int64_t> epoch_order(std::int64_t count, std::int64_t epoch, std::uint64_t seed);

/// Seeded split into (train, holdout) index lists; `holdout_fraction` of the
/// indices (rounded down) go to the holdout list.
std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>> split_indices(std::int64_t count,
                                                                              double holdout_fraction,
                                                                              std::uint64_t seed);

}  // namespace msdc
