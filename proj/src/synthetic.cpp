#include "glioma/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "glioma/error.hpp"
#include "glioma/metrics.hpp"
#include "glioma/radio.hpp"
#include "glioma/seed.hpp"

namespace glioma {

Dataset make_overfit_dataset(int count, int size, std::uint64_t seed) {
  require(count > 0 && size > 0, ErrorCode::InvalidArgument, "overfit dataset needs count, size > 0");
  Dataset d;
  std::mt19937_64 rng(mix_seed(seed, {hash_string("overfit")}));
  std::normal_distribution<float> noise(0.0f, 0.05f);
  for (int i = 0; i < count; ++i) {
    const int c = i % kNumClasses;
    PlanarImage img;
    img.channels = 3;
    img.size = size;
    img.data.resize(static_cast<std::size_t>(3) * size * size);
    const float mean = 0.2f * static_cast<float>(c + 1);
    for (auto& v : img.data) v = std::clamp(mean + noise(rng), 0.0f, 1.0f);
    d.images.push_back(std::move(img));
    d.labels.push_back(label_from_index(c));
  }
  return d;
}

namespace {

struct Rgb {
  int r, g, b;
};

std::uint8_t px(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

RasterImage synthetic_slide(ClassLabel label, const CohortOptions& o, std::uint64_t seed) {
  require(is_subtype(label), ErrorCode::InvalidArgument, "synthetic slides need an A/O/G label");
  const int w = o.grid_cols * o.tile_size, h = o.grid_rows * o.tile_size;
  auto img = RasterImage::filled(w, h, 242, 241, 244);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, 8.0);

  // stroma colour, nucleus colour, nucleus spacing, nucleus radius
  Rgb stroma{}, nucleus{};
  int spacing = 8;
  double radius = 1.5;
  switch (label) {
    case ClassLabel::A: stroma = {214, 150, 186}; nucleus = {120, 70, 150}; spacing = 11; radius = 1.6; break;
    case ClassLabel::O: stroma = {170, 150, 200}; nucleus = {80, 40, 120}; spacing = 7; radius = 2.2; break;
    default: stroma = {150, 80, 130}; nucleus = {60, 20, 90}; spacing = 5; radius = 1.8; break;
  }
  const int tissue_w = o.tissue_cols * o.tile_size;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < tissue_w; ++x) {
      auto* p = img.at(x, y);
      p[0] = px(stroma.r + jitter(rng));
      p[1] = px(stroma.g + jitter(rng));
      p[2] = px(stroma.b + jitter(rng));
    }
  std::uniform_real_distribution<double> offset(-1.5, 1.5);
  for (int cy = spacing / 2; cy < h; cy += spacing)
    for (int cx = spacing / 2; cx < tissue_w; cx += spacing) {
      const double ox = cx + offset(rng), oy = cy + offset(rng);
      const int r = static_cast<int>(std::ceil(radius)) + 1;
      for (int y = std::max(0, cy - r); y <= std::min(h - 1, cy + r); ++y)
        for (int x = std::max(0, cx - r); x <= std::min(tissue_w - 1, cx + r); ++x) {
          if (std::hypot(x - ox, y - oy) > radius) continue;
          auto* p = img.at(x, y);
          p[0] = px(nucleus.r + jitter(rng));
          p[1] = px(nucleus.g + jitter(rng));
          p[2] = px(nucleus.b + jitter(rng));
        }
    }
  return img;
}

Volume synthetic_volume(ClassLabel label, const CohortOptions& o, std::uint64_t seed, int* z_start,
                        int* z_end) {
  require(is_subtype(label), ErrorCode::InvalidArgument, "synthetic volumes need an A/O/G label");
  require(o.lesion_slices >= 1 && o.lesion_slices < o.volume_depth, ErrorCode::InvalidArgument,
          "lesion must be thinner than the volume");
  const int s = o.volume_size, d = o.volume_depth;
  Volume v;
  v.modality = o.modality;
  v.dims = {s, s, d};
  v.data.assign(v.voxel_count(), 0.0f);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 6.0);
  const int zs = std::uniform_int_distribution<int>(2, d - o.lesion_slices - 2)(rng);
  const int ze = zs + o.lesion_slices - 1;
  const double c = (s - 1) / 2.0;
  const double brain_r = 0.42 * s;
  const double lesion_r = 0.2 * s;
  const double lx = c + std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
  const double ly = c + std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
  for (int z = 0; z < d; ++z)
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        if (std::hypot(x - c, y - c) > brain_r) continue;
        double value = 100.0 + noise(rng);
        const double r = std::hypot(x - lx, y - ly);
        if (z >= zs && z <= ze && r <= lesion_r) {
          switch (label) {
            case ClassLabel::A: value += 45.0; break;
            case ClassLabel::O: value += ((x + y) % 3 == 0) ? 90.0 : -20.0; break;
            default: value += r > 0.65 * lesion_r ? 90.0 : -60.0; break;
          }
        }
        v.at(x, y, z) = static_cast<float>(std::max(1.0, value));
      }
  if (z_start) *z_start = zs;
  if (z_end) *z_end = ze;
  return v;
}

std::vector<CohortCase> write_synthetic_cohort(const std::filesystem::path& dir,
                                               const CohortOptions& o) {
  require(o.cases_per_class >= 2, ErrorCode::InvalidArgument, "need at least 2 cases per class");
  std::filesystem::create_directories(dir / "slides");
  std::filesystem::create_directories(dir / "volumes");
  std::vector<CohortCase> cases;
  std::vector<PositivityEntry> positivity;
  int n = 0;
  for (int i = 0; i < o.cases_per_class; ++i)
    for (auto label : kSubtypes) {
      char id[32];
      std::snprintf(id, sizeof id, "SYN%03d", ++n);
      CohortCase cc{id, label};
      const auto case_seed = mix_seed(o.seed, {hash_string(cc.case_id)});
      write_png(synthetic_slide(label, o, mix_seed(case_seed, {1})),
                dir / "slides" / (cc.case_id + ".png"));
      int zs = 0, ze = 0;
      auto vol = synthetic_volume(label, o, mix_seed(case_seed, {2}), &zs, &ze);
      vol.case_id = cc.case_id;
      write_nifti(vol, dir / "volumes" / (cc.case_id + "_" + modality_name(o.modality) + ".nii"),
                  NiftiType::Int16);
      positivity.push_back({cc.case_id, o.modality, {zs, ze}});
      cases.push_back(cc);
    }
  std::vector<CaseLabel> labels;
  for (const auto& c : cases) labels.push_back({c.case_id, c.label});
  write_case_labels(dir / "labels.csv", labels);
  write_positivity_csv(dir / "positivity.csv", positivity);
  return cases;
}

}  // namespace glioma
