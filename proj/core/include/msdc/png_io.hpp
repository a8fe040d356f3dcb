#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace msdc {

/// Decoded PNG samples, row-major and channel-interleaved. 16-bit samples are
/// widened to uint16 in `samples`; 8-bit ones occupy the low byte.
struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 0;   // 1 (gray) or 3 (RGB)
  int bit_depth = 0;  // 8 or 16
  std::vector<std::uint16_t> samples;
};

PngImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const PngImage& image);

/// In-memory variants; encoding is deterministic for equal inputs.
PngImage decode_png(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_png(const PngImage& image);

}  // namespace msdc
