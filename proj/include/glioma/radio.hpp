#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "glioma/labels.hpp"
#include "glioma/manifest.hpp"
#include "glioma/volume.hpp"

namespace glioma {

// Inclusive slice range [z_start, z_end] in which the lesion is visible.
struct PositiveRange {
  int z_start = 0;
  int z_end = 0;
};

struct PositivityEntry {
  std::string case_id;
  Modality modality = Modality::T2w;
  PositiveRange range;
};

// CSV with header "case_id,modality,z_start,z_end".
std::vector<PositivityEntry> read_positivity_csv(const std::filesystem::path& path);
void write_positivity_csv(const std::filesystem::path& path,
                          const std::vector<PositivityEntry>& entries);
std::vector<PositiveRange> ranges_for(const std::vector<PositivityEntry>& entries,
                                      const std::string& case_id, Modality modality);

enum class SliceAxis { X = 0, Y = 1, Z = 2 };

struct SliceOptions {
  int input_size = 224;
  SliceAxis axis = SliceAxis::Z;
};

struct ExtractedSlice {
  SliceRecord record;
  std::vector<float> pixels;  // input_size × input_size, values in [0,1]
};

// "<case>/<case>_<modality>_z<index>.vol"
std::string slice_relative_path(const std::string& case_id, Modality modality, int index);

/// Z-scores the volume, then cuts it along the chosen axis. Slices inside a
/// positive range take the case label, all others N. Each slice is resized
/// to input_size and min-max scaled to [0,1].
std::vector<ExtractedSlice> extract_slices(const Volume& volume,
                                           const std::vector<PositiveRange>& positive,
                                           ClassLabel case_label, const SliceOptions& options = {});

inline constexpr int kSliceTargetPerClass = 1500;

/// Balances each modality separately to `per_class_target` for every class
/// that modality has.
std::vector<SliceRecord> balance_slices(const std::vector<SliceRecord>& records,
                                        int per_class_target, std::uint64_t seed,
                                        BalanceMode mode = BalanceMode::Strict);

// Stored as a VOL1 volume of dims (S, S, 1).
void write_slice_image(const std::vector<float>& pixels, int size,
                       const std::filesystem::path& path);

}  // namespace glioma
