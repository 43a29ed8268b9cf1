#include <bit>
#include <cfloat>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>
#include <sstream>
#include <unistd.h>

#include "gradtrust/bundle.hpp"
#include "gradtrust/error.hpp"

namespace gradtrust {
namespace {

constexpr std::uint8_t kMagic[4] = {'G', 'T', 'P', 'K'};
constexpr std::uint32_t kVersion = 1;

enum class DType : std::uint8_t { F32 = 1, F64 = 2, I64 = 3, Blob = 4 };

constexpr const char* kUnknownChunkPrefix = "gtpk.unknown_chunk.";

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::F32: return 4;
    case DType::F64: return 8;
    case DType::I64: return 8;
    case DType::Blob: return 1;
  }
  return 0;
}

// --- encoding -------------------------------------------------------------

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void u64(std::uint64_t v) {
    for (int s = 0; s < 64; s += 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

  void chunk_header(std::string_view name, DType dtype, std::initializer_list<std::uint64_t> dims) {
    u32(static_cast<std::uint32_t>(name.size()));
    bytes(name);
    u8(static_cast<std::uint8_t>(dtype));
    u8(static_cast<std::uint8_t>(dims.size()));
    for (auto d : dims) u64(d);
  }

  void floats(std::span<const double> values, FloatStorage storage) {
    for (double v : values) {
      if (storage == FloatStorage::F32) {
        u32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      } else {
        u64(std::bit_cast<std::uint64_t>(v));
      }
    }
  }

  std::vector<std::uint8_t> take() && { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

std::string encode_meta(const std::map<std::string, std::string>& meta) {
  std::string blob;
  for (const auto& [key, value] : meta) {
    blob += key;
    blob += '=';
    blob += value;
    blob += '\n';
  }
  return blob;
}

std::vector<Violation> write_violations(const LastLayerBundle& bundle) {
  auto out = validate_bundle(bundle);
  for (const auto& [key, value] : bundle.meta) {
    if (key.empty() || key.find_first_of("=\n") != std::string::npos) {
      out.push_back({"meta", std::nullopt, "key '" + key + "' is empty or contains '=' or newline"});
    }
    if (value.find('\n') != std::string::npos) {
      out.push_back({"meta", std::nullopt, "value of '" + key + "' contains a newline"});
    }
  }
  if (bundle.storage == FloatStorage::F32) {
    auto check = [&out](const char* field, std::span<const double> values) {
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (std::fabs(values[i]) > FLT_MAX) {
          out.push_back({field, i, "value exceeds the f32 range"});
          return;
        }
      }
    };
    check("features", bundle.features.values());
    check("weights", bundle.weights.values());
    check("bias", bundle.bias.values());
    if (bundle.logits) check("logits", bundle.logits->values());
  }
  return out;
}

// --- decoding -------------------------------------------------------------

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  std::span<const std::uint8_t> take(std::size_t n, std::string_view what) {
    if (n > remaining()) {
      throw Error(ErrorCode::Truncated, "truncated " + std::string(what) + " at byte " +
                                            std::to_string(pos_) + ": need " + std::to_string(n) +
                                            ", have " + std::to_string(remaining()));
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint8_t u8(std::string_view what) { return take(1, what)[0]; }
  std::uint32_t u32(std::string_view what) {
    auto s = take(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | s[i];
    return v;
  }
  std::uint64_t u64(std::string_view what) {
    auto s = take(8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | s[i];
    return v;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t load_u32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 |
         std::uint32_t{p[3]} << 24;
}

std::uint64_t load_u64(const std::uint8_t* p) {
  return std::uint64_t{load_u32(p)} | std::uint64_t{load_u32(p + 4)} << 32;
}

struct RawChunk {
  std::string name;
  DType dtype;
  std::vector<std::uint64_t> dims;
  std::span<const std::uint8_t> payload;
};

RawChunk read_chunk(Reader& in, std::size_t index) {
  const std::string ctx = "chunk " + std::to_string(index);
  RawChunk c;
  const auto name_len = in.u32(ctx + " name length");
  const auto name = in.take(name_len, ctx + " name");
  c.name.assign(name.begin(), name.end());
  const std::string named = "chunk '" + c.name + "'";
  const auto dtype = in.u8(named + " dtype");
  if (dtype < 1 || dtype > 4) {
    throw Error(ErrorCode::Parse, named + " has unknown dtype " + std::to_string(dtype));
  }
  c.dtype = static_cast<DType>(dtype);
  const auto ndim = in.u8(named + " ndim");
  std::uint64_t count = 1;
  for (std::uint8_t i = 0; i < ndim; ++i) {
    const auto d = in.u64(named + " dims");
    c.dims.push_back(d);
    if (d != 0 && count > std::numeric_limits<std::uint64_t>::max() / d) {
      throw Error(ErrorCode::Truncated, named + " dims overflow the file size");
    }
    count *= d;
  }
  const std::uint64_t elem = dtype_size(c.dtype);
  if (count > in.remaining() / elem) {
    throw Error(ErrorCode::Truncated, named + " payload needs " + std::to_string(count * elem) +
                                          " bytes, " + std::to_string(in.remaining()) +
                                          " remain");
  }
  c.payload = in.take(static_cast<std::size_t>(count * elem), named + " payload");
  return c;
}

void expect_shape(const RawChunk& c, std::size_t ndim) {
  if (c.dims.size() != ndim) {
    throw Error(ErrorCode::ShapeMismatch, "chunk '" + c.name + "' has " +
                                              std::to_string(c.dims.size()) + " dims, expected " +
                                              std::to_string(ndim));
  }
  for (auto d : c.dims) {
    if (d == 0) throw Error(ErrorCode::ShapeMismatch, "chunk '" + c.name + "' has a zero dim");
  }
}

std::vector<double> decode_floats(const RawChunk& c) {
  if (c.dtype != DType::F32 && c.dtype != DType::F64) {
    throw Error(ErrorCode::ShapeMismatch, "chunk '" + c.name + "' must hold f32 or f64 values");
  }
  const std::size_t elem = dtype_size(c.dtype);
  std::vector<double> out(c.payload.size() / elem);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto* p = c.payload.data() + i * elem;
    out[i] = c.dtype == DType::F32 ? static_cast<double>(std::bit_cast<float>(load_u32(p)))
                                   : std::bit_cast<double>(load_u64(p));
    if (!std::isfinite(out[i])) {
      throw Error(ErrorCode::NonFinite,
                  "chunk '" + c.name + "' entry " + std::to_string(i) + " is not finite");
    }
  }
  return out;
}

Matrix decode_matrix(const RawChunk& c) {
  expect_shape(c, 2);
  return Matrix(c.dims[0], c.dims[1], decode_floats(c));
}

std::map<std::string, std::string> decode_meta(const RawChunk& c) {
  if (c.dtype != DType::Blob) {
    throw Error(ErrorCode::ShapeMismatch, "chunk 'meta' must be a UTF-8 blob");
  }
  std::map<std::string, std::string> meta;
  std::istringstream lines(std::string(c.payload.begin(), c.payload.end()));
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      meta.emplace(line, "");
    } else {
      meta.emplace(line.substr(0, eq), line.substr(eq + 1));
    }
  }
  return meta;
}

std::string describe_dims(const RawChunk& c) {
  std::string out = "dtype=" + std::to_string(static_cast<int>(c.dtype)) + " dims=";
  for (std::size_t i = 0; i < c.dims.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(c.dims[i]);
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_bundle(const LastLayerBundle& bundle) {
  if (auto violations = write_violations(bundle); !violations.empty()) {
    std::string msg = "bundle failed validation:";
    for (const auto& v : violations) msg += "\n  " + v.describe();
    throw Error(ErrorCode::Validation, msg);
  }
  const auto fdtype = static_cast<DType>(bundle.storage);
  const std::uint32_t chunks = 4 + (bundle.logits ? 1 : 0) + (bundle.meta.empty() ? 0 : 1);

  Writer w;
  w.bytes(std::string_view(reinterpret_cast<const char*>(kMagic), 4));
  w.u32(kVersion);
  w.u32(chunks);

  w.chunk_header("features", fdtype, {bundle.features.rows(), bundle.features.cols()});
  w.floats(bundle.features.values(), bundle.storage);
  w.chunk_header("weights", fdtype, {bundle.weights.rows(), bundle.weights.cols()});
  w.floats(bundle.weights.values(), bundle.storage);
  w.chunk_header("bias", fdtype, {bundle.bias.size()});
  w.floats(bundle.bias.values(), bundle.storage);
  w.chunk_header("labels", DType::I64, {bundle.labels.size()});
  for (auto label : bundle.labels) w.u64(static_cast<std::uint64_t>(label));
  if (bundle.logits) {
    w.chunk_header("logits", fdtype, {bundle.logits->rows(), bundle.logits->cols()});
    w.floats(bundle.logits->values(), bundle.storage);
  }
  if (!bundle.meta.empty()) {
    const std::string blob = encode_meta(bundle.meta);
    w.chunk_header("meta", DType::Blob, {blob.size()});
    w.bytes(blob);
  }
  return std::move(w).take();
}

LastLayerBundle decode_bundle(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  const auto magic = in.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
    throw Error(ErrorCode::BadMagic, "not a GTPK file (bad magic)");
  }
  const auto version = in.u32("version");
  if (version != kVersion) {
    throw Error(ErrorCode::UnsupportedVersion, "unsupported GTPK version " + std::to_string(version));
  }
  const auto count = in.u32("chunk count");

  std::optional<Matrix> features, weights, logits;
  std::optional<Vector> bias;
  std::optional<std::vector<std::int64_t>> labels;
  std::map<std::string, std::string> meta, unknown;
  FloatStorage storage = FloatStorage::F32;
  std::set<std::string> seen;

  for (std::uint32_t i = 0; i < count; ++i) {
    RawChunk c = read_chunk(in, i);
    if (!seen.insert(c.name).second) {
      throw Error(ErrorCode::Parse, "duplicate chunk '" + c.name + "'");
    }
    if (c.name == "features") {
      features = decode_matrix(c);
      storage = c.dtype == DType::F64 ? FloatStorage::F64 : FloatStorage::F32;
    } else if (c.name == "weights") {
      weights = decode_matrix(c);
    } else if (c.name == "logits") {
      logits = decode_matrix(c);
    } else if (c.name == "bias") {
      expect_shape(c, 1);
      bias = Vector(decode_floats(c));
    } else if (c.name == "labels") {
      expect_shape(c, 1);
      if (c.dtype != DType::I64) {
        throw Error(ErrorCode::ShapeMismatch, "chunk 'labels' must hold i64 values");
      }
      std::vector<std::int64_t> values(c.dims[0]);
      for (std::size_t k = 0; k < values.size(); ++k) {
        values[k] = static_cast<std::int64_t>(load_u64(c.payload.data() + 8 * k));
      }
      labels = std::move(values);
    } else if (c.name == "meta") {
      meta = decode_meta(c);
    } else {
      unknown.emplace(kUnknownChunkPrefix + c.name, describe_dims(c));
    }
  }
  if (in.remaining() != 0) {
    throw Error(ErrorCode::Parse, std::to_string(in.remaining()) + " trailing bytes after last chunk");
  }
  for (const char* required : {"features", "weights", "bias", "labels"}) {
    if (!seen.count(required)) {
      throw Error(ErrorCode::Validation, std::string("missing required chunk '") + required + "'");
    }
  }
  meta.merge(unknown);

  LastLayerBundle bundle{std::move(*features), std::move(*weights), std::move(*bias),
                         std::move(*labels),   std::move(logits),   std::move(meta),
                         storage};
  if (auto violations = validate_bundle(bundle); !violations.empty()) {
    std::string msg = "bundle failed validation:";
    for (const auto& v : violations) msg += "\n  " + v.describe();
    throw Error(ErrorCode::Validation, msg);
  }
  return bundle;
}

void write_bundle(const LastLayerBundle& bundle, const std::filesystem::path& path) {
  const auto bytes = encode_bundle(bundle);
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ignore;
      std::filesystem::remove(tmp, ignore);
      throw Error(ErrorCode::Io, "write to " + tmp.string() + " failed");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::Io, "cannot move bundle into place at " + path.string());
  }
}

LastLayerBundle read_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::Io, "read from " + path.string() + " failed");
  return decode_bundle(bytes);
}

}  // namespace gradtrust
