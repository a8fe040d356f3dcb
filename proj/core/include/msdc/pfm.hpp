#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "msdc/tensor.hpp"

namespace msdc {

enum class PfmErrorCode { bad_magic, bad_header, zero_scale, truncated_payload };

class PfmError : public std::runtime_error {
 public:
  PfmError(PfmErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  PfmErrorCode code() const { return code_; }

 private:
  PfmErrorCode code_;
};

/// Single-channel PFM ("Pf"). Rows are stored bottom-to-top; a negative scale
/// marks little-endian payload. Returns an (H, W) tensor.
Tensor<float> read_pfm(const std::vector<std::uint8_t>& bytes);

/// Little-endian encoding with scale -1.0. Accepts (H, W) tensors.
std::vector<std::uint8_t> write_pfm(const Tensor<float>& map);

Tensor<float> read_pfm_file(const std::filesystem::path& path);
void write_pfm_file(const std::filesystem::path& path, const Tensor<float>& map);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace msdc
