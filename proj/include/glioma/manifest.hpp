#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "glioma/labels.hpp"

namespace glioma {

// One histology training/inference unit.
struct TileRecord {
  std::string case_id;
  std::string source_path;
  int row = 0;
  int col = 0;
  double pixel_resolution = 0.25;  // microns per pixel
  ClassLabel label = ClassLabel::N;
  std::string tile_path;  // relative to the manifest directory

  bool operator==(const TileRecord&) const = default;
};

// One radiology training/inference unit (an axial slice by default).
struct SliceRecord {
  std::string case_id;
  Modality modality = Modality::T2w;
  int z_index = 0;
  ClassLabel label = ClassLabel::N;
  std::string slice_path;  // relative to the manifest directory

  bool operator==(const SliceRecord&) const = default;
};

// JSONL, one record per line, keys in field order.
void write_tile_manifest(const std::filesystem::path& path, const std::vector<TileRecord>& records);
std::vector<TileRecord> read_tile_manifest(const std::filesystem::path& path);
void write_slice_manifest(const std::filesystem::path& path,
                          const std::vector<SliceRecord>& records);
std::vector<SliceRecord> read_slice_manifest(const std::filesystem::path& path);

enum class ManifestKind { Tiles, Slices };

// Modality-agnostic view of a manifest row used by training and prediction.
struct UnitRecord {
  std::string case_id;
  ClassLabel label = ClassLabel::N;
  std::filesystem::path image_path;  // resolved
  ManifestKind kind = ManifestKind::Tiles;
  Modality modality = Modality::Histology;
};

std::vector<UnitRecord> read_unit_manifest(const std::filesystem::path& path);

enum class BalanceMode {
  Strict,           // every class must supply its target
  DownsampleLargest // classes below target keep everything they have
};

using ClassTargets = std::map<ClassLabel, int>;

// Indices (ascending) kept by a seeded per-class subsample of `labels`.
// Classes without a target pass through untouched.
std::vector<std::size_t> balanced_indices(const std::vector<ClassLabel>& labels,
                                          const ClassTargets& targets, std::uint64_t seed,
                                          BalanceMode mode);

template <class Record>
std::vector<Record> balance_by_label(const std::vector<Record>& records, const ClassTargets& targets,
                                     std::uint64_t seed, BalanceMode mode) {
  std::vector<ClassLabel> labels;
  labels.reserve(records.size());
  for (const auto& r : records) labels.push_back(r.label);
  std::vector<Record> out;
  for (auto i : balanced_indices(labels, targets, seed, mode)) out.push_back(records[i]);
  return out;
}

}  // namespace glioma
