#include "glioma/radio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "glioma/error.hpp"
#include "glioma/image.hpp"

namespace glioma {

std::vector<PositivityEntry> read_positivity_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::Io, "cannot open positivity sidecar " + path.string());
  std::vector<PositivityEntry> out;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      require(line == "case_id,modality,z_start,z_end", ErrorCode::Decode,
              path.string() + ": expected header 'case_id,modality,z_start,z_end'");
      continue;
    }
    std::stringstream ss(line);
    std::string id, mod, zs, ze;
    std::getline(ss, id, ',');
    std::getline(ss, mod, ',');
    std::getline(ss, zs, ',');
    std::getline(ss, ze, ',');
    try {
      out.push_back({id, parse_modality(mod), {std::stoi(zs), std::stoi(ze)}});
    } catch (const std::logic_error&) {
      fail(ErrorCode::Decode, path.string() + ": bad positivity row '" + line + "'");
    }
  }
  return out;
}

void write_positivity_csv(const std::filesystem::path& path,
                          const std::vector<PositivityEntry>& entries) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorCode::Io, "cannot write " + path.string());
  out << "case_id,modality,z_start,z_end\n";
  for (const auto& e : entries)
    out << e.case_id << ',' << modality_name(e.modality) << ',' << e.range.z_start << ','
        << e.range.z_end << '\n';
}

std::vector<PositiveRange> ranges_for(const std::vector<PositivityEntry>& entries,
                                      const std::string& case_id, Modality modality) {
  std::vector<PositiveRange> out;
  for (const auto& e : entries)
    if (e.case_id == case_id && e.modality == modality) out.push_back(e.range);
  return out;
}

std::string slice_relative_path(const std::string& case_id, Modality modality, int index) {
  return case_id + "/" + case_id + "_" + modality_name(modality) + "_z" + std::to_string(index) +
         ".vol";
}

std::vector<ExtractedSlice> extract_slices(const Volume& volume,
                                           const std::vector<PositiveRange>& positive,
                                           ClassLabel case_label, const SliceOptions& options) {
  require(is_subtype(case_label), ErrorCode::InvalidArgument,
          "case label must be A, O or G, got " + label_name(case_label));
  require(options.input_size >= 1, ErrorCode::InvalidArgument, "input_size must be >= 1");
  require(volume.data.size() == volume.voxel_count() && !volume.data.empty(),
          ErrorCode::ShapeMismatch, "extract_slices: malformed volume");
  const int axis = static_cast<int>(options.axis);
  const auto depth = volume.dims[static_cast<std::size_t>(axis)];

  auto sorted = positive;
  std::sort(sorted.begin(), sorted.end(),
            [](const PositiveRange& a, const PositiveRange& b) { return a.z_start < b.z_start; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& r = sorted[i];
    require(r.z_start <= r.z_end, ErrorCode::InvalidArgument,
            "inverted positive range [" + std::to_string(r.z_start) + "," +
                std::to_string(r.z_end) + "]");
    require(r.z_start >= 0 && r.z_end < depth, ErrorCode::OutOfRange,
            "positive range [" + std::to_string(r.z_start) + "," + std::to_string(r.z_end) +
                "] outside [0," + std::to_string(depth) + ")");
    if (i > 0)
      require(sorted[i - 1].z_end < r.z_start, ErrorCode::InvalidArgument,
              "overlapping positive ranges");
  }
  auto is_positive = [&](std::int64_t z) {
    return std::any_of(sorted.begin(), sorted.end(),
                       [z](const PositiveRange& r) { return z >= r.z_start && z <= r.z_end; });
  };

  const Volume norm = znormalize(volume);
  // In-plane axes: the two remaining ones, lower index fastest.
  const int u = axis == 0 ? 1 : 0;
  const int v = axis == 2 ? 1 : 2;
  const auto width = volume.dims[static_cast<std::size_t>(u)];
  const auto height = volume.dims[static_cast<std::size_t>(v)];

  std::vector<ExtractedSlice> out;
  for (std::int64_t s = 0; s < depth; ++s) {
    std::vector<float> plane(static_cast<std::size_t>(width * height));
    for (std::int64_t j = 0; j < height; ++j)
      for (std::int64_t i = 0; i < width; ++i) {
        std::array<std::int64_t, 3> p{};
        p[static_cast<std::size_t>(axis)] = s;
        p[static_cast<std::size_t>(u)] = i;
        p[static_cast<std::size_t>(v)] = j;
        plane[static_cast<std::size_t>(j * width + i)] = norm.at(p[0], p[1], p[2]);
      }
    auto pixels = resize_bilinear(plane, static_cast<int>(height), static_cast<int>(width),
                                  options.input_size, options.input_size);
    const auto [lo, hi] = std::minmax_element(pixels.begin(), pixels.end());
    const float mn = *lo, range = *hi - *lo;
    for (auto& p : pixels) p = range > 0.0f ? (p - mn) / range : 0.0f;
    SliceRecord rec{volume.case_id, volume.modality, static_cast<int>(s),
                    is_positive(s) ? case_label : ClassLabel::N,
                    slice_relative_path(volume.case_id, volume.modality, static_cast<int>(s))};
    out.push_back({std::move(rec), std::move(pixels)});
  }
  return out;
}

std::vector<SliceRecord> balance_slices(const std::vector<SliceRecord>& records,
                                        int per_class_target, std::uint64_t seed,
                                        BalanceMode mode) {
  std::map<Modality, std::vector<std::size_t>> by_modality;
  for (std::size_t i = 0; i < records.size(); ++i) by_modality[records[i].modality].push_back(i);
  std::vector<std::size_t> keep;
  for (const auto& [modality, idx] : by_modality) {
    std::vector<ClassLabel> labels;
    ClassTargets targets;
    for (auto i : idx) {
      labels.push_back(records[i].label);
      targets[records[i].label] = per_class_target;
    }
    for (auto k : balanced_indices(labels, targets, seed + static_cast<std::uint64_t>(modality), mode))
      keep.push_back(idx[k]);
  }
  std::sort(keep.begin(), keep.end());
  std::vector<SliceRecord> out;
  for (auto i : keep) out.push_back(records[i]);
  return out;
}

void write_slice_image(const std::vector<float>& pixels, int size,
                       const std::filesystem::path& path) {
  Volume v;
  v.dims = {size, size, 1};
  v.data = pixels;
  write_volume(v, path);
}

}  // namespace glioma
