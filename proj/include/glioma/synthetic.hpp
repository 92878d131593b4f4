#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "glioma/image.hpp"
#include "glioma/labels.hpp"
#include "glioma/trainer.hpp"
#include "glioma/volume.hpp"

namespace glioma {

/// Separable 4-class RGB set: class c has mean intensity 0.2·(c+1) plus
/// per-pixel noise. Classes cycle A, O, G, N.
Dataset make_overfit_dataset(int count = 64, int size = 64, std::uint64_t seed = 0);

struct CohortOptions {
  int cases_per_class = 4;
  int tile_size = 64;
  int grid_cols = 6;
  int grid_rows = 4;
  int tissue_cols = 4;  // leftmost columns hold tissue, the rest is glass
  int volume_size = 32;
  int volume_depth = 24;
  int lesion_slices = 8;
  Modality modality = Modality::T2w;
  std::uint64_t seed = 0;
};

struct CohortCase {
  std::string case_id;
  ClassLabel label = ClassLabel::A;
};

RasterImage synthetic_slide(ClassLabel label, const CohortOptions& options, std::uint64_t seed);
// Returns the volume and its inclusive lesion slice range.
Volume synthetic_volume(ClassLabel label, const CohortOptions& options, std::uint64_t seed,
                        int* z_start, int* z_end);

/// Writes slides/<case>.png, volumes/<case>_<modality>.nii, labels.csv and
/// positivity.csv under `dir`.
std::vector<CohortCase> write_synthetic_cohort(const std::filesystem::path& dir,
                                               const CohortOptions& options = {});

}  // namespace glioma
