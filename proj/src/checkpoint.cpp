#include "glioma/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "glioma/error.hpp"

namespace glioma {

namespace {

constexpr char kMagic[4] = {'D', 'C', 'N', '1'};
constexpr std::uint8_t kDtypeF32 = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint codec assumes a little-endian host");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(buf_); }
  const std::vector<std::uint8_t>& buf() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  void bytes(void* out, std::size_t n) {
    require(pos_ + n <= b_.size(), ErrorCode::Truncated, "checkpoint: unexpected end of data");
    std::memcpy(out, b_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    const auto n = u32();
    require(pos_ + n <= b_.size(), ErrorCode::Truncated, "checkpoint: string runs past end");
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void skip(std::size_t n) {
    require(n <= b_.size() - pos_, ErrorCode::Truncated, "checkpoint: unexpected end of data");
    pos_ += n;
  }
  std::size_t remaining() const { return b_.size() - pos_; }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

// Reads one tensor record header; returns the payload size in bytes after
// checking it fits in what is left.
std::size_t record_header(Reader& r, std::string& name, Shape& shape) {
  name = r.str();
  const auto dtype = r.u8();
  require(dtype == kDtypeF32, ErrorCode::Decode,
          "checkpoint: tensor '" + name + "' has unknown dtype " + std::to_string(dtype));
  const auto rank = r.u32();
  require(rank <= 8, ErrorCode::Decode, "checkpoint: implausible rank for '" + name + "'");
  shape.clear();
  std::uint64_t n = 1;
  for (std::uint32_t d = 0; d < rank; ++d) {
    const auto dim = r.u64();
    require(dim == 0 || n <= r.remaining() / dim, ErrorCode::Truncated,
            "checkpoint: tensor '" + name + "' runs past end of data");
    n *= dim;
    shape.push_back(static_cast<std::int64_t>(dim));
  }
  require(n * sizeof(float) <= r.remaining(), ErrorCode::Truncated,
          "checkpoint: tensor '" + name + "' runs past end of data");
  return static_cast<std::size_t>(n * sizeof(float));
}

// True when the record structure runs out of bytes before the trailing CRC.
bool structurally_truncated(std::span<const std::uint8_t> bytes) {
  try {
    Reader r(bytes);
    r.skip(8);
    r.str();
    const auto count = r.u32();
    std::string name;
    Shape shape;
    for (std::uint32_t i = 0; i < count; ++i) r.skip(record_header(r, name, shape));
    r.skip(4);
    return false;
  } catch (const Error& e) {
    return e.code() == ErrorCode::Truncated;
  }
}

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

void write_tensor(Writer& w, const std::string& name, const Tensor& t) {
  w.str(name);
  w.u8(kDtypeF32);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.u64(static_cast<std::uint64_t>(d));
  w.bytes(t.data().data(), t.numel() * sizeof(float));
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const DcnModel& model, const AdamState& optimizer) {
  const auto params = model.parameters();
  const auto buffers = model.buffers();
  const bool has_moments = !optimizer.m.empty();
  if (has_moments)
    require(optimizer.m.size() == params.size() && optimizer.v.size() == params.size(),
            ErrorCode::ShapeMismatch, "checkpoint: optimizer buffers do not match parameters");

  nlohmann::json header;
  header["config"] = model.config();
  header["mode"] = model.mode() == Mode::Train ? "train" : "eval";
  header["optimizer"] = {{"step", optimizer.step},   {"lr", optimizer.lr},
                         {"beta1", optimizer.beta1}, {"beta2", optimizer.beta2},
                         {"eps", optimizer.eps},     {"has_moments", has_moments}};
  const std::string json = header.dump();

  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.str(json);
  const auto count = params.size() + buffers.size() + (has_moments ? 2 * params.size() : 0);
  w.u32(static_cast<std::uint32_t>(count));
  for (const auto& p : params) write_tensor(w, "param/" + p.name, p.tensor);
  for (const auto& b : buffers) write_tensor(w, "buffer/" + b.name, b.tensor);
  if (has_moments) {
    for (std::size_t i = 0; i < params.size(); ++i)
      write_tensor(w, "adam.m/" + params[i].name, optimizer.m[i]);
    for (std::size_t i = 0; i < params.size(); ++i)
      write_tensor(w, "adam.v/" + params[i].name, optimizer.v[i]);
  }
  const auto crc = crc_of(w.buf());
  w.u32(crc);
  return w.take();
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= 12, ErrorCode::Truncated,
          "checkpoint: file too short (" + std::to_string(bytes.size()) + " bytes)");
  require(std::memcmp(bytes.data(), kMagic, 4) == 0, ErrorCode::BadMagic,
          "checkpoint: bad magic, not a DCN1 checkpoint");
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 4, 4);
  require(version == kCheckpointVersion, ErrorCode::UnsupportedVersion,
          "checkpoint: unsupported format version " + std::to_string(version));
  const auto body = bytes.first(bytes.size() - 4);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  if (crc_of(body) != stored) {
    require(!structurally_truncated(bytes), ErrorCode::Truncated,
            "checkpoint: data ends before the last tensor record");
    fail(ErrorCode::ChecksumMismatch, "checkpoint: CRC32 mismatch, file is corrupt");
  }

  Reader r(body);
  char magic[4];
  r.bytes(magic, 4);
  r.u32();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Decode, std::string("checkpoint: malformed header: ") + e.what());
  }

  std::map<std::string, Tensor> records;
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name;
    Shape shape;
    const auto payload = record_header(r, name, shape);
    std::vector<float> data(payload / sizeof(float));
    r.bytes(data.data(), payload);
    records.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  require(r.pos() == body.size(), ErrorCode::Decode, "checkpoint: trailing bytes before CRC");

  DcnConfig config;
  try {
    config = header.at("config").get<DcnConfig>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Decode, std::string("checkpoint: bad config block: ") + e.what());
  }
  DcnModel model = DcnModel::build(config, 0);
  model.set_mode(header.value("mode", "train") == "eval" ? Mode::Eval : Mode::Train);

  auto take = [&](const std::string& key, const Tensor& dst) {
    auto it = records.find(key);
    require(it != records.end(), ErrorCode::Decode, "checkpoint: missing tensor '" + key + "'");
    require(it->second.shape() == dst.shape(), ErrorCode::Decode,
            "checkpoint: tensor '" + key + "' has shape " + shape_str(it->second.shape()) +
                ", model expects " + shape_str(dst.shape()));
    return it->second;
  };
  // Stage every copy first so a failure leaves nothing half-written.
  std::vector<std::pair<Tensor, Tensor>> copies;
  const auto params = model.parameters();
  for (const auto& p : params) copies.emplace_back(p.tensor, take("param/" + p.name, p.tensor));
  for (const auto& b : model.buffers())
    copies.emplace_back(b.tensor, take("buffer/" + b.name, b.tensor));

  AdamState opt;
  const auto& oj = header.at("optimizer");
  opt.step = oj.at("step").get<std::int64_t>();
  opt.lr = oj.at("lr").get<float>();
  opt.beta1 = oj.at("beta1").get<float>();
  opt.beta2 = oj.at("beta2").get<float>();
  opt.eps = oj.at("eps").get<float>();
  if (oj.at("has_moments").get<bool>()) {
    for (const auto& p : params) {
      opt.m.push_back(take("adam.m/" + p.name, p.tensor));
      opt.v.push_back(take("adam.v/" + p.name, p.tensor));
    }
  }
  for (auto& [dst, src] : copies) {
    auto d = dst.data();
    std::copy(src.data().begin(), src.data().end(), d.begin());
  }
  return Checkpoint{std::move(model), std::move(opt)};
}

void save_checkpoint(const DcnModel& model, const AdamState& optimizer,
                     const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(model, optimizer);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorCode::Io, "failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace glioma
