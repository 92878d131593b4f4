#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "glioma/labels.hpp"

namespace glioma {

/// Scalar 3-D image, x fastest: index = x + X·(y + Y·z).
struct Volume {
  std::string case_id;
  Modality modality = Modality::T2w;
  std::array<std::int64_t, 3> dims{0, 0, 0};
  std::vector<float> data;
  std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};  // mm

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
  }
  float at(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return data[static_cast<std::size_t>(x + dims[0] * (y + dims[1] * z))];
  }
  float& at(std::int64_t x, std::int64_t y, std::int64_t z) {
    return data[static_cast<std::size_t>(x + dims[0] * (y + dims[1] * z))];
  }
};

/// Raw format "VOL1" | u32 X | u32 Y | u32 Z | X·Y·Z little-endian f32, or an
/// uncompressed single-file NIfTI-1 (.nii) of any integer or float type.
Volume read_volume(const std::filesystem::path& path);
void write_volume(const Volume& volume, const std::filesystem::path& path);

enum class NiftiType : std::int16_t {
  UInt8 = 2,
  Int16 = 4,
  Int32 = 8,
  Float32 = 16,
  Float64 = 64,
  Int8 = 256,
  UInt16 = 512,
  UInt32 = 768,
};

// Values are cast to the target type; callers pick a type that holds them.
void write_nifti(const Volume& volume, const std::filesystem::path& path, NiftiType type);

/// Z-score over nonzero voxels (the brain mask proxy); zero voxels stay zero.
/// The standard deviation is floored at 1e-6.
Volume znormalize(const Volume& volume);

}  // namespace glioma
