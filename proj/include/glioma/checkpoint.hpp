#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "glioma/adam.hpp"
#include "glioma/dcn.hpp"

namespace glioma {

// Binary layout (all integers little-endian):
//   "DCN1" | u32 version | u32 json_len | json (config + optimizer scalars)
//   | u32 n_tensors | n × { u32 name_len | name | u8 dtype | u32 rank
//   | rank × u64 dim | payload } | u32 crc32 over every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  DcnModel model;
  AdamState optimizer;
};

std::vector<std::uint8_t> serialize_checkpoint(const DcnModel& model, const AdamState& optimizer);

/// Throws BadMagic, UnsupportedVersion, Truncated or ChecksumMismatch; never
/// returns a partially populated model.
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const DcnModel& model, const AdamState& optimizer,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace glioma
