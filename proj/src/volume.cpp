#include "glioma/volume.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "glioma/error.hpp"

namespace glioma {

namespace {

constexpr char kVolMagic[4] = {'V', 'O', 'L', '1'};
constexpr std::int64_t kMaxVoxels = std::int64_t{1} << 34;

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::Io, "cannot open volume " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <class T>
T load(const std::uint8_t* p, bool swap) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if (swap) {
    auto* b = reinterpret_cast<std::uint8_t*>(&v);
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
  }
  return v;
}

std::array<std::int64_t, 3> checked_dims(std::int64_t x, std::int64_t y, std::int64_t z,
                                         const std::string& where) {
  require(x > 0 && y > 0 && z > 0, ErrorCode::Decode, where + ": dimensions must be positive");
  require(x <= kMaxVoxels / y && x * y <= kMaxVoxels / z, ErrorCode::Decode,
          where + ": dimensions overflow");
  return {x, y, z};
}

Volume read_raw(const std::vector<std::uint8_t>& bytes, const std::string& where) {
  require(bytes.size() >= 16, ErrorCode::Decode, where + ": truncated VOL1 header");
  Volume v;
  v.dims = checked_dims(load<std::uint32_t>(bytes.data() + 4, false),
                        load<std::uint32_t>(bytes.data() + 8, false),
                        load<std::uint32_t>(bytes.data() + 12, false), where);
  const auto n = v.voxel_count();
  require(bytes.size() - 16 == n * sizeof(float), ErrorCode::Decode,
          where + ": payload has " + std::to_string(bytes.size() - 16) + " bytes, expected " +
              std::to_string(n * sizeof(float)));
  v.data.resize(n);
  std::memcpy(v.data.data(), bytes.data() + 16, n * sizeof(float));
  return v;
}

template <class T>
void convert(const std::uint8_t* src, std::size_t n, bool swap, std::vector<float>& out) {
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(load<T>(src + i * sizeof(T), swap));
}

Volume read_nifti(const std::vector<std::uint8_t>& bytes, const std::string& where) {
  require(bytes.size() >= 348, ErrorCode::Decode, where + ": truncated NIfTI header");
  bool swap = false;
  if (load<std::int32_t>(bytes.data(), false) != 348) {
    swap = true;
    require(load<std::int32_t>(bytes.data(), true) == 348, ErrorCode::BadMagic,
            where + ": neither VOL1 nor NIfTI-1");
  }
  require(std::memcmp(bytes.data() + 344, "n+1\0", 4) == 0, ErrorCode::BadMagic,
          where + ": only single-file NIfTI-1 (n+1) is supported");
  std::int16_t dim[8];
  for (int i = 0; i < 8; ++i) dim[i] = load<std::int16_t>(bytes.data() + 40 + 2 * i, swap);
  require(dim[0] >= 3 && dim[0] <= 7, ErrorCode::Decode, where + ": expected a 3-D volume");
  const auto datatype = load<std::int16_t>(bytes.data() + 70, swap);
  float pixdim[8];
  for (int i = 0; i < 8; ++i) pixdim[i] = load<float>(bytes.data() + 76 + 4 * i, swap);
  const auto vox_offset = static_cast<std::size_t>(load<float>(bytes.data() + 108, swap));

  Volume v;
  v.dims = checked_dims(dim[1], dim[2], dim[3], where);
  for (int i = 0; i < 3; ++i) v.spacing[i] = pixdim[i + 1] > 0.0f ? pixdim[i + 1] : 1.0f;
  const auto n = v.voxel_count();
  std::size_t width = 0;
  switch (static_cast<NiftiType>(datatype)) {
    case NiftiType::UInt8: case NiftiType::Int8: width = 1; break;
    case NiftiType::Int16: case NiftiType::UInt16: width = 2; break;
    case NiftiType::Int32: case NiftiType::UInt32: case NiftiType::Float32: width = 4; break;
    case NiftiType::Float64: width = 8; break;
    default: fail(ErrorCode::Decode, where + ": unsupported NIfTI datatype " + std::to_string(datatype));
  }
  require(vox_offset >= 348 && bytes.size() >= vox_offset && bytes.size() - vox_offset >= n * width,
          ErrorCode::Decode, where + ": payload shorter than dims × datatype");
  const auto* src = bytes.data() + vox_offset;
  switch (static_cast<NiftiType>(datatype)) {
    case NiftiType::UInt8: convert<std::uint8_t>(src, n, swap, v.data); break;
    case NiftiType::Int8: convert<std::int8_t>(src, n, swap, v.data); break;
    case NiftiType::Int16: convert<std::int16_t>(src, n, swap, v.data); break;
    case NiftiType::UInt16: convert<std::uint16_t>(src, n, swap, v.data); break;
    case NiftiType::Int32: convert<std::int32_t>(src, n, swap, v.data); break;
    case NiftiType::UInt32: convert<std::uint32_t>(src, n, swap, v.data); break;
    case NiftiType::Float32: convert<float>(src, n, swap, v.data); break;
    case NiftiType::Float64: convert<double>(src, n, swap, v.data); break;
  }
  const float slope = load<float>(bytes.data() + 112, swap);
  const float inter = load<float>(bytes.data() + 116, swap);
  if (slope != 0.0f && std::isfinite(slope) && std::isfinite(inter) &&
      (slope != 1.0f || inter != 0.0f))
    for (auto& x : v.data) x = x * slope + inter;
  return v;
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorCode::Io, "failed writing " + path.string());
}

template <class T>
void append(std::vector<std::uint8_t>& buf, T v) {
  const auto* b = reinterpret_cast<const std::uint8_t*>(&v);
  buf.insert(buf.end(), b, b + sizeof(T));
}

template <class T>
void put(std::vector<std::uint8_t>& buf, std::size_t offset, T v) {
  std::memcpy(buf.data() + offset, &v, sizeof(T));
}

}  // namespace

Volume read_volume(const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little);
  const auto bytes = slurp(path);
  const auto where = path.string();
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kVolMagic, 4) == 0) return read_raw(bytes, where);
  require(bytes.size() >= 348, ErrorCode::BadMagic, where + ": neither VOL1 nor NIfTI-1");
  return read_nifti(bytes, where);
}

void write_volume(const Volume& volume, const std::filesystem::path& path) {
  require(volume.data.size() == volume.voxel_count(), ErrorCode::ShapeMismatch,
          "write_volume: data length does not match dims");
  for (auto d : volume.dims)
    require(d > 0 && d <= std::numeric_limits<std::uint32_t>::max(), ErrorCode::InvalidArgument,
            "write_volume: dimension out of range");
  std::vector<std::uint8_t> buf(kVolMagic, kVolMagic + 4);
  for (auto d : volume.dims) append(buf, static_cast<std::uint32_t>(d));
  const auto* p = reinterpret_cast<const std::uint8_t*>(volume.data.data());
  buf.insert(buf.end(), p, p + volume.data.size() * sizeof(float));
  write_bytes(path, buf);
}

void write_nifti(const Volume& volume, const std::filesystem::path& path, NiftiType type) {
  require(volume.data.size() == volume.voxel_count(), ErrorCode::ShapeMismatch,
          "write_nifti: data length does not match dims");
  for (auto d : volume.dims)
    require(d > 0 && d <= std::numeric_limits<std::int16_t>::max(), ErrorCode::InvalidArgument,
            "write_nifti: dimension out of range for NIfTI-1");
  std::vector<std::uint8_t> buf(352, 0);
  put<std::int32_t>(buf, 0, 348);
  put<std::int16_t>(buf, 40, 3);
  for (int i = 0; i < 3; ++i) put<std::int16_t>(buf, 42 + 2 * i, static_cast<std::int16_t>(volume.dims[i]));
  for (int i = 3; i < 7; ++i) put<std::int16_t>(buf, 42 + 2 * i, 1);
  std::int16_t bitpix = 0;
  switch (type) {
    case NiftiType::UInt8: case NiftiType::Int8: bitpix = 8; break;
    case NiftiType::Int16: case NiftiType::UInt16: bitpix = 16; break;
    case NiftiType::Int32: case NiftiType::UInt32: case NiftiType::Float32: bitpix = 32; break;
    case NiftiType::Float64: bitpix = 64; break;
  }
  put<std::int16_t>(buf, 70, static_cast<std::int16_t>(type));
  put<std::int16_t>(buf, 72, bitpix);
  put<float>(buf, 76, 1.0f);
  for (int i = 0; i < 3; ++i) put<float>(buf, 80 + 4 * i, volume.spacing[i]);
  put<float>(buf, 108, 352.0f);
  std::memcpy(buf.data() + 344, "n+1\0", 4);
  for (float v : volume.data) {
    switch (type) {
      case NiftiType::UInt8: append(buf, static_cast<std::uint8_t>(v)); break;
      case NiftiType::Int8: append(buf, static_cast<std::int8_t>(v)); break;
      case NiftiType::Int16: append(buf, static_cast<std::int16_t>(v)); break;
      case NiftiType::UInt16: append(buf, static_cast<std::uint16_t>(v)); break;
      case NiftiType::Int32: append(buf, static_cast<std::int32_t>(v)); break;
      case NiftiType::UInt32: append(buf, static_cast<std::uint32_t>(v)); break;
      case NiftiType::Float32: append(buf, v); break;
      case NiftiType::Float64: append(buf, static_cast<double>(v)); break;
    }
  }
  write_bytes(path, buf);
}

Volume znormalize(const Volume& volume) {
  require(!volume.data.empty(), ErrorCode::EmptyInput, "znormalize: empty volume");
  double sum = 0.0;
  std::size_t count = 0;
  for (float v : volume.data)
    if (v != 0.0f) {
      sum += v;
      ++count;
    }
  Volume out = volume;
  if (count == 0) return out;
  const double mean = sum / static_cast<double>(count);
  double sq = 0.0;
  for (float v : volume.data)
    if (v != 0.0f) sq += (v - mean) * (v - mean);
  const double stddev = std::max(std::sqrt(sq / static_cast<double>(count)), 1e-6);
  for (auto& v : out.data)
    if (v != 0.0f) v = static_cast<float>((v - mean) / stddev);
  return out;
}

}  // namespace glioma
