#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "msdc/adam.hpp"
#include "msdc/model.hpp"

namespace msdc {

/// Everything needed to resume training exactly.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  ModelConfig config;
  ParamSet<float> params;  // values and batch-norm buffers
  AdamState adam;
  std::int64_t step = 0;
  std::uint64_t rng_seed = 0;  // seed of the data stream (crops, shuffles)
};

enum class CheckpointErrorCode { bad_magic, unsupported_version, corrupt_length, mismatch };

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorCode code, const std::string& detail);
  CheckpointErrorCode code() const { return code_; }

 private:
  CheckpointErrorCode code_;
};

/// Little-endian: "MSDC", u32 version, header scalars, then records of
/// (u32 name length, name, u32 rank, i64 dims..., f32 payload).
std::vector<std::uint8_t> save_checkpoint(const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint_file(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint_file(const std::filesystem::path& path);

}  // namespace msdc
