#include "glioma/histo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "glioma/error.hpp"
#include "glioma/parallel.hpp"
#include "glioma/seed.hpp"

namespace glioma {

std::vector<GridCell> tile_grid(std::int64_t width, std::int64_t height, int tile) {
  require(tile > 0, ErrorCode::InvalidArgument, "tile_grid: tile size must be positive");
  require(width >= 0 && height >= 0, ErrorCode::InvalidArgument, "tile_grid: negative dimensions");
  const auto rows = height / tile;
  const auto cols = width / tile;
  std::vector<GridCell> cells;
  cells.reserve(static_cast<std::size_t>(rows * cols));
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c)
      cells.push_back({static_cast<int>(r), static_cast<int>(c), static_cast<int>(c * tile),
                       static_cast<int>(r * tile)});
  return cells;
}

namespace {

void require_rgb(const RasterImage& tile) {
  require(tile.channels == 3 &&
              tile.pixels.size() == tile.pixel_count() * 3,
          ErrorCode::InvalidArgument,
          "expected an 8-bit RGB tile, got " + std::to_string(tile.channels) + " channel(s)");
}

}  // namespace

QcVerdict qc_tile(const RasterImage& tile, const QcOptions& options) {
  require_rgb(tile);
  const auto n = tile.pixel_count();
  require(n > 0, ErrorCode::EmptyInput, "qc_tile: empty tile");
  std::size_t bright = 0, tissue = 0;
  double spread = 0.0, red = 0.0, green = 0.0, blue = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = tile.pixels[3 * i], g = tile.pixels[3 * i + 1], b = tile.pixels[3 * i + 2];
    if (is_bright(r, g, b)) {
      ++bright;
      continue;
    }
    ++tissue;
    spread += std::max({r, g, b}) - std::min({r, g, b});
    red += r;
    green += g;
    blue += b;
  }
  QcVerdict v;
  v.bright_pixel_fraction = static_cast<double>(bright) / static_cast<double>(n);
  v.background_fraction = v.bright_pixel_fraction;
  auto negative = [&](QcReason why) {
    v.verdict = QcOutcome::NegativeN;
    v.reason = why;
    return v;
  };
  if (v.bright_pixel_fraction > options.bright_fraction_threshold) return negative(QcReason::Bright);
  if (options.background_threshold && v.background_fraction >= *options.background_threshold)
    return negative(QcReason::Background);
  if (tissue > 0) {
    const double t = static_cast<double>(tissue) * 255.0;
    if (options.flag_low_saturation && spread / t < options.min_channel_spread)
      return negative(QcReason::LowSaturation);
    if (options.flag_hemorrhage &&
        red / t - 0.5 * (green + blue) / t > options.hemorrhage_red_excess)
      return negative(QcReason::Hemorrhage);
  }
  return v;
}

double cellularity_fraction(const RasterImage& tile) {
  require_rgb(tile);
  const auto n = tile.pixel_count();
  if (n == 0) return 0.0;
  std::size_t dark = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (!is_bright(tile.pixels[3 * i], tile.pixels[3 * i + 1], tile.pixels[3 * i + 2])) ++dark;
  return static_cast<double>(dark) / static_cast<double>(n);
}

long QuotaTable::key(double resolution) { return std::lround(resolution * 1000.0); }

QuotaTable QuotaTable::defaults() {
  QuotaTable t;
  t.set(0.25, ClassLabel::O, 10);
  t.set(0.25, ClassLabel::A, 10);
  t.set(0.25, ClassLabel::G, 31);
  t.set(0.50, ClassLabel::O, 5);
  t.set(0.50, ClassLabel::A, 20);
  t.set(0.50, ClassLabel::G, 50);
  return t;
}

void QuotaTable::set(double resolution, ClassLabel label, int quota) {
  require(quota >= 0, ErrorCode::InvalidArgument, "negative tile quota");
  quotas_[{key(resolution), label}] = quota;
}

int QuotaTable::quota(double resolution, ClassLabel label) const {
  auto it = quotas_.find({key(resolution), label});
  require(it != quotas_.end(), ErrorCode::InvalidArgument,
          "no tile quota for class " + label_name(label) + " at resolution " +
              std::to_string(resolution));
  return it->second;
}

QuotaTable QuotaTable::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::Io, "cannot open quota table " + path.string());
  QuotaTable t;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      require(line.rfind("resolution,label,quota", 0) == 0, ErrorCode::Decode,
              path.string() + ": expected header 'resolution,label,quota'");
      continue;
    }
    std::stringstream ss(line);
    std::string res, label, quota;
    std::getline(ss, res, ',');
    std::getline(ss, label, ',');
    std::getline(ss, quota, ',');
    try {
      t.set(std::stod(res), parse_label(label), std::stoi(quota));
    } catch (const std::logic_error&) {
      fail(ErrorCode::Decode, path.string() + ": bad quota row '" + line + "'");
    }
  }
  return t;
}

std::string tile_relative_path(const std::string& case_id, int row, int col) {
  return case_id + "/" + case_id + "_r" + std::to_string(row) + "_c" + std::to_string(col) + ".png";
}

std::vector<ExtractedTile> extract_tiles(const Slide& slide, ClassLabel slide_label, int quota,
                                         const ExtractOptions& options) {
  require(is_subtype(slide_label), ErrorCode::InvalidArgument,
          "slide label must be A, O or G, got " + label_name(slide_label));
  require(quota >= 0, ErrorCode::InvalidArgument, "quota must be >= 0");
  require_rgb(slide.image);
  const auto cells = tile_grid(slide.image.width, slide.image.height, options.tile_size);

  enum class Kind { Skip, Positive, Negative };
  std::vector<Kind> kinds(cells.size(), Kind::Skip);
  std::vector<RasterImage> pixels(cells.size());
  parallel_for(cells.size(), options.threads, [&](std::size_t i) {
    auto tile = crop(slide.image, cells[i].x, cells[i].y, options.tile_size, options.tile_size);
    if (qc_tile(tile, options.qc).verdict == QcOutcome::NegativeN)
      kinds[i] = Kind::Negative;
    else if (cellularity_fraction(tile) > options.min_cellularity)
      kinds[i] = Kind::Positive;
    if (kinds[i] != Kind::Skip) pixels[i] = std::move(tile);
  });

  std::vector<std::size_t> positives;
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (kinds[i] == Kind::Positive) positives.push_back(i);
  if (positives.size() > static_cast<std::size_t>(quota)) {
    std::mt19937_64 rng(mix_seed(options.seed, {hash_string(slide.case_id)}));
    std::shuffle(positives.begin(), positives.end(), rng);
    positives.resize(static_cast<std::size_t>(quota));
  }
  std::vector<bool> keep_positive(cells.size(), false);
  for (auto i : positives) keep_positive[i] = true;

  std::vector<ExtractedTile> out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    ClassLabel label;
    if (kinds[i] == Kind::Negative)
      label = ClassLabel::N;
    else if (keep_positive[i])
      label = slide_label;
    else
      continue;
    TileRecord rec{slide.case_id,
                   slide.source_path,
                   cells[i].row,
                   cells[i].col,
                   slide.pixel_resolution,
                   label,
                   tile_relative_path(slide.case_id, cells[i].row, cells[i].col)};
    out.push_back({std::move(rec), std::move(pixels[i])});
  }
  return out;
}

std::vector<TileRecord> balance_manifest(const std::vector<TileRecord>& records,
                                         const ClassTargets& per_class_target, std::uint64_t seed,
                                         BalanceMode mode) {
  return balance_by_label(records, per_class_target, seed, mode);
}

}  // namespace glioma
