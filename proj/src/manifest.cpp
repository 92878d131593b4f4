#include "glioma/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include <json.hpp>

#include "glioma/error.hpp"
#include "glioma/seed.hpp"

namespace glioma {

namespace {

using ordered_json = nlohmann::ordered_json;

std::vector<ordered_json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::Io, "cannot open manifest " + path.string());
  std::vector<ordered_json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      rows.push_back(ordered_json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::Decode,
           path.string() + ":" + std::to_string(lineno) + ": malformed JSON: " + e.what());
    }
  }
  return rows;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<ordered_json>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::Io, "cannot write manifest " + path.string());
  for (const auto& r : rows) out << r.dump() << '\n';
  require(out.good(), ErrorCode::Io, "failed writing manifest " + path.string());
}

template <class Fn>
auto field(const std::filesystem::path& path, std::size_t row, Fn&& fn) {
  try {
    return fn();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Decode,
         path.string() + ": record " + std::to_string(row + 1) + ": " + e.what());
  }
}

}  // namespace

void write_tile_manifest(const std::filesystem::path& path, const std::vector<TileRecord>& records) {
  std::vector<ordered_json> rows;
  for (const auto& r : records) {
    ordered_json j;
    j["case_id"] = r.case_id;
    j["source_path"] = r.source_path;
    j["row"] = r.row;
    j["col"] = r.col;
    j["pixel_resolution"] = r.pixel_resolution;
    j["label"] = label_name(r.label);
    j["tile_path"] = r.tile_path;
    rows.push_back(std::move(j));
  }
  write_jsonl(path, rows);
}

std::vector<TileRecord> read_tile_manifest(const std::filesystem::path& path) {
  std::vector<TileRecord> out;
  const auto rows = read_jsonl(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& j = rows[i];
    out.push_back(field(path, i, [&] {
      TileRecord r;
      r.case_id = j.at("case_id").get<std::string>();
      r.source_path = j.at("source_path").get<std::string>();
      r.row = j.at("row").get<int>();
      r.col = j.at("col").get<int>();
      r.pixel_resolution = j.at("pixel_resolution").get<double>();
      r.label = parse_label(j.at("label").get<std::string>());
      r.tile_path = j.at("tile_path").get<std::string>();
      return r;
    }));
  }
  return out;
}

void write_slice_manifest(const std::filesystem::path& path,
                          const std::vector<SliceRecord>& records) {
  std::vector<ordered_json> rows;
  for (const auto& r : records) {
    ordered_json j;
    j["case_id"] = r.case_id;
    j["modality"] = modality_name(r.modality);
    j["z_index"] = r.z_index;
    j["label"] = label_name(r.label);
    j["slice_path"] = r.slice_path;
    rows.push_back(std::move(j));
  }
  write_jsonl(path, rows);
}

std::vector<SliceRecord> read_slice_manifest(const std::filesystem::path& path) {
  std::vector<SliceRecord> out;
  const auto rows = read_jsonl(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& j = rows[i];
    out.push_back(field(path, i, [&] {
      SliceRecord r;
      r.case_id = j.at("case_id").get<std::string>();
      r.modality = parse_modality(j.at("modality").get<std::string>());
      r.z_index = j.at("z_index").get<int>();
      r.label = parse_label(j.at("label").get<std::string>());
      r.slice_path = j.at("slice_path").get<std::string>();
      return r;
    }));
  }
  return out;
}

std::vector<UnitRecord> read_unit_manifest(const std::filesystem::path& path) {
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path q(p);
    return q.is_absolute() ? q : base / q;
  };
  const auto rows = read_jsonl(path);
  std::vector<UnitRecord> out;
  if (rows.empty()) return out;
  if (rows.front().contains("z_index")) {
    for (const auto& r : read_slice_manifest(path))
      out.push_back({r.case_id, r.label, resolve(r.slice_path), ManifestKind::Slices, r.modality});
  } else {
    for (const auto& r : read_tile_manifest(path))
      out.push_back(
          {r.case_id, r.label, resolve(r.tile_path), ManifestKind::Tiles, Modality::Histology});
  }
  return out;
}

std::vector<std::size_t> balanced_indices(const std::vector<ClassLabel>& labels,
                                          const ClassTargets& targets, std::uint64_t seed,
                                          BalanceMode mode) {
  std::map<ClassLabel, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [label, target] : targets) {
    require(target >= 0, ErrorCode::InvalidArgument, "negative balance target");
    const auto have = by_class.count(label) ? by_class[label].size() : 0;
    if (mode == BalanceMode::Strict)
      require(have >= static_cast<std::size_t>(target), ErrorCode::InsufficientSamples,
              "class " + label_name(label) + " has " + std::to_string(have) +
                  " samples, target " + std::to_string(target));
  }
  std::vector<std::size_t> keep;
  for (auto& [label, idx] : by_class) {
    auto it = targets.find(label);
    if (it != targets.end() && idx.size() > static_cast<std::size_t>(it->second)) {
      std::mt19937_64 rng(mix_seed(seed, {static_cast<std::uint64_t>(index_of(label))}));
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(static_cast<std::size_t>(it->second));
    }
    keep.insert(keep.end(), idx.begin(), idx.end());
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

}  // namespace glioma
