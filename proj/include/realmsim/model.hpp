#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "realmsim/bytes.hpp"
#include "realmsim/cbor.hpp"

namespace realmsim::model {

// Weights, biases and inputs are signed fixed point at scale 2^-16.
inline constexpr int kFractionBits = 16;
inline constexpr int32_t kOne = int32_t{1} << kFractionBits;
// Raw magnitude bound that keeps a 1024-term dot product inside int64.
inline constexpr int64_t kMaxMagnitude = int64_t{1} << 26;
inline constexpr size_t kMaxFeatures = 1024;

// Usage limits travelling with a model. An empty bound is unlimited.
struct Policy {
  std::optional<uint64_t> max_inferences;
  std::optional<uint64_t> valid_until;  // last tick at which inference is allowed

  static Policy unlimited() { return {}; }
  cbor::Value to_cbor() const;
  static Policy from_cbor(const cbor::Value& value);
  static Policy from_json(const nlohmann::json& j);
  bool operator==(const Policy&) const = default;
};

// An affine classifier: class = argmax_c (W[c] . x + b[c]).
struct ModelPackage {
  uint64_t version = 1;
  uint32_t classes = 0;
  uint32_t features = 0;
  std::vector<int32_t> weights;  // row-major, classes x features
  std::vector<int32_t> bias;     // classes
  Policy policy;
  Digest digest{};

  // SHA-256 over the canonical encoding of every field except the digest.
  Digest compute_digest() const;
  void seal() { digest = compute_digest(); }
  // Throws Error(Integrity) on inconsistent dimensions, out-of-range
  // entries, or a digest that does not recompute.
  void validate() const;

  // Little-endian int32 bytes of W; what must never leak to the host.
  Bytes weight_encoding() const;

  Bytes encode() const;
  static ModelPackage decode(ByteView bytes);

  bool operator==(const ModelPackage&) const = default;
};

// Integer class scores at scale 2^-32: sum_d W[c][d] * x[d] + (b[c] << 16).
std::vector<int64_t> scores(const ModelPackage& model, std::span<const int32_t> input);

// Lowest class index among the maximal scores.
uint32_t classify(const ModelPackage& model, std::span<const int32_t> input);

// Deterministic pseudo-random model used by fixtures and tests.
ModelPackage fixture_model(uint64_t seed, uint32_t classes, uint32_t features,
                           uint64_t version = 1, Policy policy = {});

}  // namespace realmsim::model
