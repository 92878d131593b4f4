#include <cmath>
#include <cstring>
#include <map>

#include "glioma/radio.hpp"
#include "glioma/trainer.hpp"
#include "glioma/volume.hpp"
#include "helpers.hpp"

using namespace glioma;

namespace {

Volume ramp_volume(std::int64_t x, std::int64_t y, std::int64_t z) {
  Volume v;
  v.dims = {x, y, z};
  v.data.resize(v.voxel_count());
  for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = static_cast<float>(i % 97) + 1.0f;
  return v;
}

template <class T>
void swap_at(std::vector<char>& b, std::size_t offset) {
  std::reverse(b.begin() + static_cast<long>(offset), b.begin() + static_cast<long>(offset + sizeof(T)));
}

}  // namespace

TEST_CASE("raw volume round trip") {
  const auto dir = scratch_dir("vol_raw");
  auto v = ramp_volume(5, 4, 3);
  v.data[7] = -2.5f;
  write_volume(v, dir / "v.vol");
  const auto back = read_volume(dir / "v.vol");
  CHECK(back.dims == v.dims);
  CHECK(back.data == v.data);
  CHECK(back.at(2, 1, 0) == v.data[7]);
}

TEST_CASE("raw volume errors") {
  const auto dir = scratch_dir("vol_raw_bad");
  write_volume(ramp_volume(4, 4, 4), dir / "v.vol");
  auto bytes = file_bytes(dir / "v.vol");
  {
    std::ofstream out(dir / "short.vol", std::ios::binary);
    out.write(bytes.data(), static_cast<long>(bytes.size() - 4));
  }
  CHECK_ERROR_CODE(read_volume(dir / "short.vol"), ErrorCode::Decode);
  {
    std::ofstream out(dir / "junk.vol", std::ios::binary);
    out << "this is not a volume";
  }
  CHECK_ERROR_CODE(read_volume(dir / "junk.vol"), ErrorCode::BadMagic);
  CHECK_ERROR_CODE(read_volume(dir / "absent.vol"), ErrorCode::Io);
}

TEST_CASE("NIfTI round trip for every supported datatype") {
  const auto dir = scratch_dir("nifti");
  auto v = ramp_volume(6, 5, 4);
  v.spacing = {0.5f, 0.75f, 2.0f};
  for (auto type : {NiftiType::UInt8, NiftiType::Int8, NiftiType::Int16, NiftiType::UInt16,
                    NiftiType::Int32, NiftiType::UInt32, NiftiType::Float32,
                    NiftiType::Float64}) {
    CAPTURE(static_cast<int>(type));
    write_nifti(v, dir / "v.nii", type);
    const auto back = read_volume(dir / "v.nii");
    CHECK(back.dims == v.dims);
    CHECK(back.spacing == v.spacing);
    CHECK(back.data == v.data);  // ramp values fit every type exactly
  }
}

TEST_CASE("big-endian NIfTI is byte-swapped on read") {
  const auto dir = scratch_dir("nifti_be");
  const auto v = ramp_volume(3, 2, 2);
  write_nifti(v, dir / "le.nii", NiftiType::Int16);
  auto b = file_bytes(dir / "le.nii");
  swap_at<std::int32_t>(b, 0);
  for (int i = 0; i < 8; ++i) swap_at<std::int16_t>(b, 40 + 2 * i);
  swap_at<std::int16_t>(b, 70);
  swap_at<std::int16_t>(b, 72);
  for (int i = 0; i < 8; ++i) swap_at<float>(b, 76 + 4 * i);
  swap_at<float>(b, 108);
  for (std::size_t i = 0; i < v.voxel_count(); ++i) swap_at<std::int16_t>(b, 352 + 2 * i);
  {
    std::ofstream out(dir / "be.nii", std::ios::binary);
    out.write(b.data(), static_cast<long>(b.size()));
  }
  const auto back = read_volume(dir / "be.nii");
  CHECK(back.dims == v.dims);
  CHECK(back.data == v.data);
}

TEST_CASE("NIfTI intensity scaling is applied") {
  const auto dir = scratch_dir("nifti_scale");
  write_nifti(ramp_volume(2, 2, 2), dir / "v.nii", NiftiType::Int16);
  auto b = file_bytes(dir / "v.nii");
  const float slope = 2.0f, inter = -1.0f;
  std::memcpy(b.data() + 112, &slope, 4);
  std::memcpy(b.data() + 116, &inter, 4);
  {
    std::ofstream out(dir / "s.nii", std::ios::binary);
    out.write(b.data(), static_cast<long>(b.size()));
  }
  const auto back = read_volume(dir / "s.nii");
  CHECK(back.data[0] == 1.0f);
  CHECK(back.data[3] == 7.0f);
}

TEST_CASE("z-score over nonzero voxels") {
  Volume v;
  v.dims = {4, 1, 1};
  v.data = {0.0f, 2.0f, 4.0f, 6.0f};
  const auto z = znormalize(v);
  CHECK(z.data[0] == 0.0f);
  // mean 4, population std sqrt(8/3)
  CHECK(z.data[1] == doctest::Approx(-2.0 / std::sqrt(8.0 / 3.0)));
  CHECK(z.data[2] == doctest::Approx(0.0));
  v.data = {0.0f, 5.0f, 5.0f, 5.0f};
  const auto flat = znormalize(v);
  CHECK(flat.data[1] == 0.0f);
}

TEST_CASE("positivity sidecar round trip") {
  const auto dir = scratch_dir("positivity");
  const std::vector<PositivityEntry> entries{{"C1", Modality::T2w, {3, 9}},
                                             {"C1", Modality::GdT1w, {4, 8}},
                                             {"C1", Modality::T2w, {12, 13}}};
  write_positivity_csv(dir / "p.csv", entries);
  const auto back = read_positivity_csv(dir / "p.csv");
  REQUIRE(back.size() == 3);
  CHECK(back[1].modality == Modality::GdT1w);
  CHECK(ranges_for(back, "C1", Modality::T2w).size() == 2);
  CHECK(ranges_for(back, "C2", Modality::T2w).empty());
}

TEST_CASE("slices inside positive ranges carry the case label") {
  auto v = ramp_volume(8, 6, 10);
  v.case_id = "C7";
  v.modality = Modality::Flair;
  SliceOptions opts;
  opts.input_size = 12;
  const auto slices = extract_slices(v, {{2, 4}, {7, 7}}, ClassLabel::A, opts);
  REQUIRE(slices.size() == 10);
  int positives = 0;
  for (const auto& s : slices) {
    const bool inside = (s.record.z_index >= 2 && s.record.z_index <= 4) || s.record.z_index == 7;
    CHECK(s.record.label == (inside ? ClassLabel::A : ClassLabel::N));
    positives += inside;
    CHECK(s.pixels.size() == 144);
    const auto [lo, hi] = std::minmax_element(s.pixels.begin(), s.pixels.end());
    CHECK(*lo >= 0.0f);
    CHECK(*hi <= 1.0f);
  }
  CHECK(positives == 4);
  CHECK(slices[3].record.slice_path == "C7/C7_FLAIR_z3.vol");

  opts.axis = SliceAxis::X;
  CHECK(extract_slices(v, {}, ClassLabel::G, opts).size() == 8);
}

TEST_CASE("positive range errors") {
  const auto v = ramp_volume(4, 4, 6);
  CHECK_ERROR_CODE(extract_slices(v, {{4, 2}}, ClassLabel::A), ErrorCode::InvalidArgument);
  CHECK_ERROR_CODE(extract_slices(v, {{0, 6}}, ClassLabel::A), ErrorCode::OutOfRange);
  CHECK_ERROR_CODE(extract_slices(v, {{-1, 2}}, ClassLabel::A), ErrorCode::OutOfRange);
  CHECK_ERROR_CODE(extract_slices(v, {{0, 3}, {3, 4}}, ClassLabel::A),
                   ErrorCode::InvalidArgument);
  CHECK_ERROR_CODE(extract_slices(v, {}, ClassLabel::N), ErrorCode::InvalidArgument);
}

TEST_CASE("slice manifest round trip is byte identical") {
  const auto dir = scratch_dir("slice_manifest");
  const std::vector<SliceRecord> recs{{"C1", Modality::T2w, 4, ClassLabel::O, "slices/a.vol"},
                                      {"C1", Modality::GdT1w, 5, ClassLabel::N, "slices/b.vol"}};
  write_slice_manifest(dir / "m.jsonl", recs);
  CHECK(read_slice_manifest(dir / "m.jsonl") == recs);
  write_slice_manifest(dir / "m2.jsonl", read_slice_manifest(dir / "m.jsonl"));
  CHECK(file_bytes(dir / "m.jsonl") == file_bytes(dir / "m2.jsonl"));
  const auto units = read_unit_manifest(dir / "m.jsonl");
  REQUIRE(units.size() == 2);
  CHECK(units[0].kind == ManifestKind::Slices);
  CHECK(units[0].image_path == dir / "slices/a.vol");
}

TEST_CASE("balance_slices works per modality") {
  std::vector<SliceRecord> recs;
  for (int i = 0; i < 12; ++i) {
    recs.push_back({"C", Modality::T2w, i, i < 8 ? ClassLabel::N : ClassLabel::G, "p"});
    recs.push_back({"C", Modality::GdT1w, i, i < 6 ? ClassLabel::N : ClassLabel::G, "p"});
  }
  const auto out = balance_slices(recs, 3, 1);
  std::map<std::pair<Modality, ClassLabel>, int> counts;
  for (const auto& r : out) ++counts[{r.modality, r.label}];
  CHECK(counts[{Modality::T2w, ClassLabel::N}] == 3);
  CHECK(counts[{Modality::T2w, ClassLabel::G}] == 3);
  CHECK(counts[{Modality::GdT1w, ClassLabel::G}] == 3);
  CHECK_ERROR_CODE(balance_slices(recs, 5, 1), ErrorCode::InsufficientSamples);
}

TEST_CASE("stored slices load back at any size") {
  const auto dir = scratch_dir("slice_image");
  std::vector<float> px(16);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<float>(i) / 15.0f;
  write_slice_image(px, 4, dir / "s.vol");
  UnitRecord u{"C", ClassLabel::N, dir / "s.vol", ManifestKind::Slices, Modality::T2w};
  const auto same = load_unit_image(u, 4, 1);
  CHECK(same.data == px);
  CHECK(load_unit_image(u, 8, 1).data.size() == 64);
  CHECK_ERROR_CODE(load_unit_image(u, 4, 3), ErrorCode::ShapeMismatch);
}
