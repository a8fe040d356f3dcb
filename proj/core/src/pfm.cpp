#include "msdc/pfm.hpp"

#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace msdc {
namespace {

/// Reads one whitespace-terminated header token starting at `pos`.
std::string next_token(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
  while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
  std::string tok;
  while (pos < bytes.size() && !std::isspace(bytes[pos])) tok.push_back(static_cast<char>(bytes[pos++]));
  return tok;
}

std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

}  // namespace

Tensor<float> read_pfm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  const std::string magic = next_token(bytes, pos);
  if (magic != "Pf") throw PfmError(PfmErrorCode::bad_magic, "bad magic: expected 'Pf', got '" + magic + "'");
  const std::string ws = next_token(bytes, pos);
  const std::string hs = next_token(bytes, pos);
  const std::string ss = next_token(bytes, pos);
  long long width = 0, height = 0;
  double scale = 0;
  try {
    std::size_t used = 0;
    width = std::stoll(ws, &used);
    if (used != ws.size()) throw std::invalid_argument(ws);
    height = std::stoll(hs, &used);
    if (used != hs.size()) throw std::invalid_argument(hs);
    scale = std::stod(ss, &used);
    if (used != ss.size()) throw std::invalid_argument(ss);
  } catch (const std::exception&) {
    throw PfmError(PfmErrorCode::bad_header, "bad header: '" + ws + " " + hs + " " + ss + "'");
  }
  if (width <= 0 || height <= 0) throw PfmError(PfmErrorCode::bad_header, "bad header: non-positive dimensions");
  if (scale == 0.0) throw PfmError(PfmErrorCode::zero_scale, "zero scale");
  // Exactly one whitespace byte separates the scale line from the payload.
  if (pos >= bytes.size()) throw PfmError(PfmErrorCode::truncated_payload, "truncated payload");
  ++pos;

  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  const std::size_t need = count * 4;
  if (bytes.size() - pos < need) {
    throw PfmError(PfmErrorCode::truncated_payload, "truncated payload: need " + std::to_string(need) +
                                                        " bytes, have " + std::to_string(bytes.size() - pos));
  }
  const bool little = scale < 0;
  const bool swap = little != (std::endian::native == std::endian::little);
  Tensor<float> out({height, width});
  for (long long row = 0; row < height; ++row) {
    const long long dst_row = height - 1 - row;
    for (long long x = 0; x < width; ++x) {
      std::uint32_t raw;
      std::memcpy(&raw, bytes.data() + pos + static_cast<std::size_t>(row * width + x) * 4, 4);
      if (swap) raw = byteswap32(raw);
      out[dst_row * width + x] = std::bit_cast<float>(raw);
    }
  }
  return out;
}

std::vector<std::uint8_t> write_pfm(const Tensor<float>& map) {
  if (map.rank() != 2) throw ShapeError("PFM expects an (H, W) map, got " + shape_str(map.shape()));
  const std::int64_t H = map.dim(0), W = map.dim(1);
  const std::string header = "Pf\n" + std::to_string(W) + " " + std::to_string(H) + "\n-1.0\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + static_cast<std::size_t>(H * W * 4));
  for (std::int64_t row = H - 1; row >= 0; --row) {
    for (std::int64_t x = 0; x < W; ++x) {
      std::uint32_t raw = std::bit_cast<std::uint32_t>(map[row * W + x]);
      if constexpr (std::endian::native != std::endian::little) raw = byteswap32(raw);
      for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>((raw >> (8 * b)) & 0xffu));
    }
  }
  return out;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

Tensor<float> read_pfm_file(const std::filesystem::path& path) { return read_pfm(read_bytes(path)); }

void write_pfm_file(const std::filesystem::path& path, const Tensor<float>& map) { write_bytes(path, write_pfm(map)); }

}  // namespace msdc
