#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "glioma/image.hpp"
#include "glioma/labels.hpp"
#include "glioma/manifest.hpp"

namespace glioma {

inline constexpr int kDefaultTileSize = 2000;
// A channel is bright when strictly above 80% of full scale.
inline constexpr int kBrightChannelThreshold = 204;

struct GridCell {
  int row = 0;
  int col = 0;
  int x = 0;
  int y = 0;
};

/// Non-overlapping grid with stride == tile; partial border tiles are dropped.
std::vector<GridCell> tile_grid(std::int64_t width, std::int64_t height, int tile);

inline bool is_bright(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return r > kBrightChannelThreshold && g > kBrightChannelThreshold && b > kBrightChannelThreshold;
}

enum class QcOutcome { Positive, NegativeN };

enum class QcReason { None, Bright, Background, LowSaturation, Hemorrhage };

struct QcVerdict {
  double background_fraction = 0.0;
  double bright_pixel_fraction = 0.0;
  QcOutcome verdict = QcOutcome::Positive;
  QcReason reason = QcReason::None;
};

struct QcOptions {
  // N when strictly more than this fraction of pixels is bright.
  double bright_fraction_threshold = 0.95;
  // Optional extra background rule (N when background_fraction >= value).
  std::optional<double> background_threshold;
  // Pen marks / grey artifacts: mean channel spread of the non-bright pixels.
  bool flag_low_saturation = true;
  double min_channel_spread = 10.0 / 255.0;
  // Red-dominant tissue read as hemorrhage.
  bool flag_hemorrhage = false;
  double hemorrhage_red_excess = 60.0 / 255.0;
};

QcVerdict qc_tile(const RasterImage& tile, const QcOptions& options = {});

/// Fraction of non-bright pixels.
double cellularity_fraction(const RasterImage& tile);

inline constexpr double kMinCellularity = 0.80;

// Per-case positive tile quotas keyed by (resolution, class).
class QuotaTable {
 public:
  // Defaults: 0.25 µm/px → O 10, A 10, G 31; 0.50 µm/px → O 5, A 20, G 50.
  static QuotaTable defaults();
  static QuotaTable read_csv(const std::filesystem::path& path);

  void set(double resolution, ClassLabel label, int quota);
  int quota(double resolution, ClassLabel label) const;

 private:
  static long key(double resolution);
  std::map<std::pair<long, ClassLabel>, int> quotas_;
};

struct Slide {
  std::string case_id;
  std::string source_path;
  RasterImage image;
  double pixel_resolution = 0.25;
};

struct ExtractOptions {
  int tile_size = kDefaultTileSize;
  double min_cellularity = kMinCellularity;
  QcOptions qc;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct ExtractedTile {
  TileRecord record;
  RasterImage pixels;
};

// "<case>/<case>_r<row>_c<col>.png"
std::string tile_relative_path(const std::string& case_id, int row, int col);

/// Labels every grid tile of a slide. QC failures become N; tiles whose
/// cellularity exceeds the threshold become slide_label positives, capped at
/// `quota` by a seeded subsample; everything else is skipped. Output is in
/// row-major grid order regardless of the thread count.
std::vector<ExtractedTile> extract_tiles(const Slide& slide, ClassLabel slide_label, int quota,
                                         const ExtractOptions& options = {});

std::vector<TileRecord> balance_manifest(const std::vector<TileRecord>& records,
                                         const ClassTargets& per_class_target, std::uint64_t seed,
                                         BalanceMode mode = BalanceMode::Strict);

}  // namespace glioma
