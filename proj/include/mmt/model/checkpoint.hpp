#pragma once

// Checkpoint container, version 1. All integers and doubles little-endian.
//
//   char[8]  magic "MMTCKPT1"
//   u32      format version (1)
//   u32      n, then n bytes: model config as "key = value\n" lines
//   u64      rng seed
//   u64      optimizer step
//   u32      parameter count P
//   P times: u32 name length, name bytes, u32 rank, rank x i64 extents,
//            product(extents) x f64 values (row-major)
//   u32      momentum buffer count (0 or P), then per buffer the f64 values
//            in parameter order and shape

#include "mmt/model/params.hpp"

#include <filesystem>

namespace mmt::model {

struct Checkpoint {
  ModelConfig config;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  ModelParams params;
  std::vector<Matrix> momentum;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::string& bytes);

}  // namespace mmt::model
