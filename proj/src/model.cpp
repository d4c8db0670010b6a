#include "realmsim/model.hpp"

#include <cstdlib>

#include "realmsim/crypto.hpp"
#include "realmsim/error.hpp"
#include "realmsim/rng.hpp"

namespace realmsim::model {

namespace {

Bytes pack_int32(const std::vector<int32_t>& values) {
  Bytes out;
  out.reserve(values.size() * 4);
  for (int32_t v : values) append_le32(out, static_cast<uint32_t>(v));
  return out;
}

std::vector<int32_t> unpack_int32(const Bytes& bytes) {
  if (bytes.size() % 4 != 0) throw Error(ErrorCode::kDecode, "int32 array length not a multiple of 4");
  std::vector<int32_t> out(bytes.size() / 4);
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<int32_t>(load_le32(ByteView(bytes).subspan(4 * i, 4)));
  }
  return out;
}

cbor::Map body_fields(const ModelPackage& m) {
  return cbor::Map{{1, m.version},
                   {2, m.classes},
                   {3, m.features},
                   {4, pack_int32(m.weights)},
                   {5, pack_int32(m.bias)},
                   {6, m.policy.to_cbor()}};
}

bool in_range(int64_t v) { return v >= -kMaxMagnitude && v <= kMaxMagnitude; }

}  // namespace

cbor::Value Policy::to_cbor() const {
  cbor::Map m;
  if (max_inferences) m.emplace_back(1, *max_inferences);
  if (valid_until) m.emplace_back(2, *valid_until);
  return m;
}

Policy Policy::from_cbor(const cbor::Value& value) {
  cbor::MapReader m(value, {}, {1, 2});
  Policy p;
  if (const cbor::Value* v = m.find(1)) {
    p.max_inferences = v->as_uint();
    if (*p.max_inferences == 0) throw Error(ErrorCode::kDecode, "max_inferences must be positive");
  }
  if (const cbor::Value* v = m.find(2)) p.valid_until = v->as_uint();
  return p;
}

Policy Policy::from_json(const nlohmann::json& j) {
  Policy p;
  if (j.is_null()) return p;
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "policy must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key != "max_inferences" && key != "valid_until") {
      throw Error(ErrorCode::kConfig, "unknown policy field '" + key + "'");
    }
    if (value.is_null() || value == "unlimited") continue;
    if (!value.is_number_integer() || value.get<int64_t>() < 0) throw Error(ErrorCode::kConfig, key + " must be a tick count");
    (key == "max_inferences" ? p.max_inferences : p.valid_until) = value.get<uint64_t>();
  }
  if (p.max_inferences && *p.max_inferences == 0) {
    throw Error(ErrorCode::kConfig, "max_inferences must be positive");
  }
  return p;
}

Digest ModelPackage::compute_digest() const { return crypto::sha256(cbor::encode(body_fields(*this))); }

void ModelPackage::validate() const {
  if (classes == 0 || features == 0 || features > kMaxFeatures) {
    throw Error(ErrorCode::kIntegrity, "model dimensions out of range");
  }
  if (weights.size() != size_t{classes} * features || bias.size() != classes) {
    throw Error(ErrorCode::kIntegrity, "model dimensions disagree with weight arrays");
  }
  for (int32_t w : weights) {
    if (!in_range(w)) throw Error(ErrorCode::kIntegrity, "weight magnitude too large");
  }
  for (int32_t b : bias) {
    if (!in_range(b)) throw Error(ErrorCode::kIntegrity, "bias magnitude too large");
  }
  if (compute_digest() != digest) throw Error(ErrorCode::kIntegrity, "model digest mismatch");
}

Bytes ModelPackage::weight_encoding() const { return pack_int32(weights); }

Bytes ModelPackage::encode() const {
  cbor::Map fields = body_fields(*this);
  fields.emplace_back(7, digest);
  return cbor::encode(fields);
}

ModelPackage ModelPackage::decode(ByteView bytes) {
  cbor::Value root = cbor::decode(bytes);
  cbor::MapReader m(root, {1, 2, 3, 4, 5, 6, 7});
  ModelPackage p;
  p.version = m.at(1).as_uint();
  uint64_t classes = m.at(2).as_uint();
  uint64_t features = m.at(3).as_uint();
  if (classes > UINT32_MAX || features > UINT32_MAX) {
    throw Error(ErrorCode::kDecode, "model dimensions overflow");
  }
  p.classes = static_cast<uint32_t>(classes);
  p.features = static_cast<uint32_t>(features);
  p.weights = unpack_int32(m.at(4).as_bytes());
  p.bias = unpack_int32(m.at(5).as_bytes());
  p.policy = Policy::from_cbor(m.at(6));
  p.digest = m.fixed<32>(7);
  return p;
}

std::vector<int64_t> scores(const ModelPackage& model, std::span<const int32_t> input) {
  if (input.size() != model.features) {
    throw Error(ErrorCode::kBounds, "input has " + std::to_string(input.size()) +
                                        " features, model expects " +
                                        std::to_string(model.features));
  }
  for (int32_t x : input) {
    if (!in_range(x)) throw Error(ErrorCode::kBounds, "input magnitude too large");
  }
  std::vector<int64_t> out(model.classes);
  for (uint32_t c = 0; c < model.classes; ++c) {
    int64_t acc = static_cast<int64_t>(model.bias[c]) * kOne;
    const int32_t* row = model.weights.data() + size_t{c} * model.features;
    for (uint32_t d = 0; d < model.features; ++d) {
      acc += static_cast<int64_t>(row[d]) * input[d];
    }
    out[c] = acc;
  }
  return out;
}

uint32_t classify(const ModelPackage& model, std::span<const int32_t> input) {
  std::vector<int64_t> s = scores(model, input);
  uint32_t best = 0;
  for (uint32_t c = 1; c < s.size(); ++c) {
    if (s[c] > s[best]) best = c;
  }
  return best;
}

ModelPackage fixture_model(uint64_t seed, uint32_t classes, uint32_t features, uint64_t version,
                           Policy policy) {
  DeterministicRng rng(seed);
  ModelPackage m;
  m.version = version;
  m.classes = classes;
  m.features = features;
  // Entries uniform in (-2, 2) in real terms.
  auto draw = [&rng] {
    return static_cast<int32_t>(static_cast<int64_t>(rng.below(4 * kOne)) - 2 * kOne);
  };
  for (size_t i = 0; i < size_t{classes} * features; ++i) m.weights.push_back(draw());
  for (uint32_t c = 0; c < classes; ++c) m.bias.push_back(draw());
  m.policy = policy;
  m.seal();
  return m;
}

}  // namespace realmsim::model
