#include "realmsim/attestation.hpp"

#include "realmsim/error.hpp"

namespace realmsim::attestation {

namespace {

constexpr uint64_t kReportScheme = 1;
constexpr uint64_t kReportRealm = 2;
constexpr uint64_t kReportPlatform = 3;

constexpr uint64_t kRealmRim = 1;
constexpr uint64_t kRealmRem = 2;
constexpr uint64_t kRealmPersonalization = 3;
constexpr uint64_t kRealmChallenge = 4;
constexpr uint64_t kRealmKeyHash = 5;

constexpr uint64_t kPlatformMeasurements = 1;
constexpr uint64_t kPlatformLifecycle = 2;
constexpr uint64_t kPlatformRealmDigest = 3;
constexpr uint64_t kPlatformSignature = 4;

cbor::Value realm_token_value(const RealmToken& token) {
  cbor::Array rem;
  for (const Digest& slot : token.rem) rem.emplace_back(slot);
  return cbor::Map{{kRealmRim, token.rim},
                   {kRealmRem, std::move(rem)},
                   {kRealmPersonalization, token.personalization},
                   {kRealmChallenge, token.challenge},
                   {kRealmKeyHash, token.public_key_hash}};
}

cbor::Map platform_fields(const PlatformToken& token) {
  cbor::Array measurements;
  for (const Digest& d : token.platform_measurements) measurements.emplace_back(d);
  return cbor::Map{{kPlatformMeasurements, std::move(measurements)},
                   {kPlatformLifecycle, static_cast<uint64_t>(token.lifecycle)},
                   {kPlatformRealmDigest, token.realm_token_digest}};
}

RealmToken realm_token_from(const cbor::Value& value) {
  cbor::MapReader m(value, {kRealmRim, kRealmRem, kRealmPersonalization, kRealmChallenge,
                            kRealmKeyHash});
  RealmToken token;
  token.rim = m.fixed<32>(kRealmRim);
  const cbor::Array& rem = m.at(kRealmRem).as_array();
  if (rem.size() != kRemSlots) throw Error(ErrorCode::kDecode, "rem must have 4 slots");
  for (size_t i = 0; i < kRemSlots; ++i) token.rem[i] = to_array<32>(rem[i].as_bytes());
  token.personalization = m.fixed<64>(kRealmPersonalization);
  token.challenge = m.fixed<64>(kRealmChallenge);
  token.public_key_hash = m.fixed<32>(kRealmKeyHash);
  return token;
}

LifecycleState lifecycle_from(uint64_t raw) {
  if (raw > static_cast<uint64_t>(LifecycleState::kDebug)) {
    throw Error(ErrorCode::kDecode, "unknown lifecycle state " + std::to_string(raw));
  }
  return static_cast<LifecycleState>(raw);
}

PlatformToken platform_token_from(const cbor::Value& value) {
  cbor::MapReader m(value, {kPlatformMeasurements, kPlatformLifecycle, kPlatformRealmDigest,
                            kPlatformSignature});
  PlatformToken token;
  for (const cbor::Value& d : m.at(kPlatformMeasurements).as_array()) {
    token.platform_measurements.push_back(to_array<32>(d.as_bytes()));
  }
  token.lifecycle = lifecycle_from(m.at(kPlatformLifecycle).as_uint());
  token.realm_token_digest = m.fixed<32>(kPlatformRealmDigest);
  token.signature = m.fixed<64>(kPlatformSignature);
  return token;
}

std::vector<Digest> digests_from(const cbor::Value& value) {
  std::vector<Digest> out;
  for (const cbor::Value& d : value.as_array()) out.push_back(to_array<32>(d.as_bytes()));
  return out;
}

template <size_t N>
std::array<uint8_t, N> hex_array(const nlohmann::json& j, const char* field) {
  if (!j.contains(field) || !j[field].is_string()) {
    throw Error(ErrorCode::kConfig, std::string("missing hex field '") + field + "'");
  }
  return to_array<N>(from_hex(j[field].get<std::string>()));
}

}  // namespace

MeasurementRecord MeasurementRecord::of(ByteView content, uint64_t target_addr) {
  return {crypto::sha256(content), target_addr};
}

std::array<uint8_t, 40> MeasurementRecord::encode() const {
  std::array<uint8_t, 40> out{};
  std::copy(content_digest.begin(), content_digest.end(), out.begin());
  for (int i = 0; i < 8; ++i) out[32 + i] = static_cast<uint8_t>(target_addr >> (8 * i));
  return out;
}

Digest extend(const Digest& chain, const MeasurementRecord& record) {
  auto bytes = record.encode();
  return crypto::sha256({chain, bytes});
}

Digest extend(const Digest& chain, const Digest& digest) { return crypto::sha256({chain, digest}); }

Digest creation_digest(const RealmParams& params) {
  Bytes entry;
  append_le64(entry, params.entry_point.granule);
  append_le64(entry, params.entry_point.offset);
  return crypto::sha256({params.personalization, entry});
}

Digest initial_rim(const RealmParams& params) {
  return extend(kZeroDigest, creation_digest(params));
}

Bytes encode_realm_token(const RealmToken& token) { return cbor::encode(realm_token_value(token)); }

Bytes platform_signed_payload(const PlatformToken& token) {
  Bytes out{kSchemeEd25519Sha256};
  append(out, cbor::encode(platform_fields(token)));
  return out;
}

AttestationReport assemble_report(const RealmClaims& claims, const Challenge& challenge,
                                  const PlatformState& platform) {
  AttestationReport report;
  report.realm.rim = claims.rim;
  report.realm.rem = claims.rem;
  report.realm.personalization = claims.personalization;
  report.realm.challenge = challenge;
  report.realm.public_key_hash = crypto::sha256(platform.signing_key.public_key());

  report.platform.platform_measurements = platform.measurements;
  report.platform.lifecycle = platform.lifecycle;
  report.platform.realm_token_digest = crypto::sha256(encode_realm_token(report.realm));
  report.platform.signature =
      platform.signing_key.sign(platform_signed_payload(report.platform));
  return report;
}

Bytes encode(const AttestationReport& report) {
  cbor::Map platform = platform_fields(report.platform);
  platform.emplace_back(kPlatformSignature, report.platform.signature);
  return cbor::encode(cbor::Map{{kReportScheme, uint64_t{kSchemeEd25519Sha256}},
                                {kReportRealm, realm_token_value(report.realm)},
                                {kReportPlatform, std::move(platform)}});
}

AttestationReport decode(ByteView bytes) {
  cbor::Value root = cbor::decode(bytes);
  cbor::MapReader m(root, {kReportScheme, kReportRealm, kReportPlatform});
  if (m.at(kReportScheme).as_uint() != kSchemeEd25519Sha256) {
    throw Error(ErrorCode::kDecode, "unsupported token scheme");
  }
  return {realm_token_from(m.at(kReportRealm)), platform_token_from(m.at(kReportPlatform))};
}

cbor::Value ReferenceValues::to_cbor() const {
  cbor::Array sets;
  for (const auto& set : accepted_platform_measurements) {
    cbor::Array items;
    for (const Digest& d : set) items.emplace_back(d);
    sets.emplace_back(std::move(items));
  }
  return cbor::Map{{1, expected_rim},
                   {2, std::move(sets)},
                   {3, platform_public_key},
                   {4, uint64_t{require_secured ? 1u : 0u}}};
}

ReferenceValues ReferenceValues::from_cbor(const cbor::Value& value) {
  cbor::MapReader m(value, {1, 2, 3, 4});
  ReferenceValues refs;
  refs.expected_rim = m.fixed<32>(1);
  for (const cbor::Value& set : m.at(2).as_array()) {
    refs.accepted_platform_measurements.push_back(digests_from(set));
  }
  refs.platform_public_key = m.fixed<32>(3);
  uint64_t secured = m.at(4).as_uint();
  if (secured > 1) throw Error(ErrorCode::kDecode, "require_secured must be 0 or 1");
  refs.require_secured = secured == 1;
  return refs;
}

nlohmann::ordered_json ReferenceValues::to_json() const {
  nlohmann::ordered_json j;
  j["expected_rim"] = to_hex(expected_rim);
  j["accepted_platform_measurements"] = nlohmann::ordered_json::array();
  for (const auto& set : accepted_platform_measurements) {
    nlohmann::ordered_json items = nlohmann::ordered_json::array();
    for (const Digest& d : set) items.push_back(to_hex(d));
    j["accepted_platform_measurements"].push_back(items);
  }
  j["platform_public_key"] = to_hex(platform_public_key);
  j["require_secured"] = require_secured;
  return j;
}

ReferenceValues ReferenceValues::from_json(const nlohmann::json& j) {
  ReferenceValues refs;
  try {
    refs.expected_rim = hex_array<32>(j, "expected_rim");
    refs.platform_public_key = hex_array<32>(j, "platform_public_key");
    for (const auto& set : j.at("accepted_platform_measurements")) {
      std::vector<Digest> digests;
      for (const auto& d : set) digests.push_back(to_array<32>(from_hex(d.get<std::string>())));
      refs.accepted_platform_measurements.push_back(std::move(digests));
    }
    refs.require_secured = j.value("require_secured", true);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("reference values: ") + e.what());
  }
  return refs;
}

std::string_view reject_reason_name(RejectReason reason) {
  switch (reason) {
    case RejectReason::kDecodeError: return "DecodeError";
    case RejectReason::kSignatureMismatch: return "SignatureMismatch";
    case RejectReason::kBindingMismatch: return "BindingMismatch";
    case RejectReason::kChallengeMismatch: return "ChallengeMismatch";
    case RejectReason::kRimMismatch: return "RimMismatch";
    case RejectReason::kPlatformMismatch: return "PlatformMismatch";
    case RejectReason::kDebugPlatform: return "DebugPlatform";
  }
  return "?";
}

std::string Verdict::describe() const {
  if (accepted) return "Accept";
  std::string out = "Reject(" + std::string(reject_reason_name(reason)) + ")";
  if (!detail.empty()) out += ": " + detail;
  return out;
}

Verdict verify_report(const AttestationReport& report, const Challenge& expected_challenge,
                      const ReferenceValues& refs) {
  if (!crypto::verify_signature(refs.platform_public_key,
                                platform_signed_payload(report.platform),
                                report.platform.signature)) {
    return Verdict::reject(RejectReason::kSignatureMismatch, "platform token signature invalid");
  }
  if (report.platform.realm_token_digest != crypto::sha256(encode_realm_token(report.realm))) {
    return Verdict::reject(RejectReason::kBindingMismatch, "realm token digest differs");
  }
  if (report.realm.public_key_hash != crypto::sha256(refs.platform_public_key)) {
    return Verdict::reject(RejectReason::kBindingMismatch, "realm token bound to another platform");
  }
  if (report.realm.challenge != expected_challenge) {
    return Verdict::reject(RejectReason::kChallengeMismatch);
  }
  if (report.realm.rim != refs.expected_rim) {
    return Verdict::reject(RejectReason::kRimMismatch, "rim " + to_hex(report.realm.rim));
  }
  bool platform_known = false;
  for (const auto& set : refs.accepted_platform_measurements) {
    if (set == report.platform.platform_measurements) platform_known = true;
  }
  if (!platform_known) return Verdict::reject(RejectReason::kPlatformMismatch);
  if (refs.require_secured && report.platform.lifecycle != LifecycleState::kSecured) {
    return Verdict::reject(RejectReason::kDebugPlatform);
  }
  return Verdict::accept();
}

Verdict verify_report(ByteView encoded, const Challenge& expected_challenge,
                      const ReferenceValues& refs) {
  AttestationReport report;
  try {
    report = decode(encoded);
  } catch (const Error& e) {
    return Verdict::reject(RejectReason::kDecodeError, e.what());
  }
  return verify_report(report, expected_challenge, refs);
}

}  // namespace realmsim::attestation
