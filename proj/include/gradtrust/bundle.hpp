#pragma once
// Last-layer bundles: everything needed to score a batch of samples without
// the network that produced them, plus the GTPK container they travel in.
//
// GTPK layout (little-endian):
//   "GTPK" | u32 version = 1 | u32 chunk_count
//   chunk := u32 name_len | name bytes | u8 dtype | u8 ndim | ndim x u64 dims | payload
//   dtype: 1 = f32, 2 = f64, 3 = i64, 4 = UTF-8 blob (dims = [byte length])
// Required chunks: features [M,d], weights [d,N], bias [N], labels [M] (i64).
// Optional: logits [M,N], meta (blob of key=value lines).

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gradtrust/tensor.hpp"

namespace gradtrust {

enum class FloatStorage : std::uint8_t { F32 = 1, F64 = 2 };

struct LastLayerBundle {
  Matrix features;  // M x d penultimate activations
  Matrix weights;   // d x N final layer
  Vector bias;      // N
  std::vector<std::int64_t> labels;
  std::optional<Matrix> logits;  // M x N
  std::map<std::string, std::string> meta;
  // Float dtype used when this bundle is written; read_bundle records the
  // dtype found in the file so rewrites are byte-stable.
  FloatStorage storage = FloatStorage::F32;

  std::size_t samples() const noexcept { return features.rows(); }
  std::size_t feature_dim() const noexcept { return features.cols(); }
  std::size_t classes() const noexcept { return weights.cols(); }

  friend bool operator==(const LastLayerBundle&, const LastLayerBundle&) = default;
};

struct Violation {
  std::string field;
  std::optional<std::size_t> index;  // sample or entry coordinate, when one applies
  std::string message;

  std::string describe() const;
};

// Every invariant violation, empty when the bundle is consistent. Finiteness
// and non-emptiness are already guaranteed by the tensor types.
std::vector<Violation> validate_bundle(const LastLayerBundle& bundle);

// Fills logits from features/weights/bias when absent; no-op otherwise.
LastLayerBundle ensure_logits(LastLayerBundle bundle);

// Max |stored - recomputed| over all logit entries; nullopt without stored logits.
std::optional<double> logit_consistency(const LastLayerBundle& bundle);

// Stored logits exported from 32-bit models should agree with recomputation
// to this tolerance; larger gaps are reported as a warning.
inline constexpr double kLogitConsistencyTolerance = 1e-3;

// Validates, then writes atomically (temp file + rename). Throws
// Error(Validation) or Error(Io).
void write_bundle(const LastLayerBundle& bundle, const std::filesystem::path& path);

// Throws Error with BadMagic, UnsupportedVersion, Truncated, ShapeMismatch,
// NonFinite, Validation or Io. Unknown chunks are skipped and recorded in
// meta under "gtpk.unknown_chunk.<name>".
LastLayerBundle read_bundle(const std::filesystem::path& path);

// In-memory forms of the same codec.
std::vector<std::uint8_t> encode_bundle(const LastLayerBundle& bundle);
LastLayerBundle decode_bundle(std::span<const std::uint8_t> bytes);

}  // namespace gradtrust
