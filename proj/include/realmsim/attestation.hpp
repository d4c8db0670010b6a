#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "realmsim/bytes.hpp"
#include "realmsim/cbor.hpp"
#include "realmsim/crypto.hpp"

namespace realmsim::attestation {

inline constexpr size_t kRemSlots = 4;
// Header byte identifying the token algorithms: Ed25519 signatures over
// SHA-256 digests.
inline constexpr uint8_t kSchemeEd25519Sha256 = 0x01;

// One populated granule: digest of its contents plus the realm address it
// was loaded at. Encodes to exactly 40 bytes.
struct MeasurementRecord {
  Digest content_digest{};
  uint64_t target_addr = 0;

  static MeasurementRecord of(ByteView content, uint64_t target_addr);
  std::array<uint8_t, 40> encode() const;
};

// H(chain || record) with H = SHA-256.
Digest extend(const Digest& chain, const MeasurementRecord& record);
// H(chain || digest); used for the creation record and runtime slots.
Digest extend(const Digest& chain, const Digest& digest);

// Entry point relative to the realm's own populated granules.
struct EntryPoint {
  uint64_t granule = 0;
  uint64_t offset = 0;
  bool operator==(const EntryPoint&) const = default;
};

struct RealmParams {
  Personalization personalization{};
  EntryPoint entry_point;
};

// H(personalization || le64(entry granule) || le64(entry offset)).
Digest creation_digest(const RealmParams& params);
// Initial measurement right after creation: extend(0^32, creation_digest).
Digest initial_rim(const RealmParams& params);

enum class LifecycleState : uint8_t { kSecured = 0, kDebug = 1 };

struct RealmToken {
  Digest rim{};
  std::array<Digest, kRemSlots> rem{};
  Personalization personalization{};
  Challenge challenge{};
  Digest public_key_hash{};

  bool operator==(const RealmToken&) const = default;
};

struct PlatformToken {
  std::vector<Digest> platform_measurements;
  LifecycleState lifecycle = LifecycleState::kSecured;
  Digest realm_token_digest{};
  Signature signature{};

  bool operator==(const PlatformToken&) const = default;
};

struct AttestationReport {
  RealmToken realm;
  PlatformToken platform;

  bool operator==(const AttestationReport&) const = default;
};

// Claims taken from a live realm descriptor.
struct RealmClaims {
  Digest rim{};
  std::array<Digest, kRemSlots> rem{};
  Personalization personalization{};
};

// Firmware state and the hardware root-of-trust key that signs platform
// tokens.
struct PlatformState {
  std::vector<Digest> measurements;
  LifecycleState lifecycle = LifecycleState::kSecured;
  crypto::SigningKey signing_key;
};

Bytes encode_realm_token(const RealmToken& token);
// Bytes covered by the platform signature: scheme byte followed by the
// canonical platform token without its signature.
Bytes platform_signed_payload(const PlatformToken& token);

AttestationReport assemble_report(const RealmClaims& claims, const Challenge& challenge,
                                  const PlatformState& platform);

Bytes encode(const AttestationReport& report);
// Strict canonical decode; throws Error(Decode).
AttestationReport decode(ByteView bytes);

struct ReferenceValues {
  Digest expected_rim{};
  std::vector<std::vector<Digest>> accepted_platform_measurements;
  PublicKey platform_public_key{};
  bool require_secured = true;

  cbor::Value to_cbor() const;
  static ReferenceValues from_cbor(const cbor::Value& value);
  nlohmann::ordered_json to_json() const;
  static ReferenceValues from_json(const nlohmann::json& j);

  bool operator==(const ReferenceValues&) const = default;
};

enum class RejectReason {
  kDecodeError,
  kSignatureMismatch,
  kBindingMismatch,
  kChallengeMismatch,
  kRimMismatch,
  kPlatformMismatch,
  kDebugPlatform,
};

std::string_view reject_reason_name(RejectReason reason);

struct Verdict {
  bool accepted = false;
  RejectReason reason = RejectReason::kDecodeError;
  std::string detail;

  static Verdict accept() { return {true, RejectReason::kDecodeError, {}}; }
  static Verdict reject(RejectReason reason, std::string detail = {}) {
    return {false, reason, std::move(detail)};
  }
  std::string describe() const;
};

// Checks in fixed order: signature, binding, challenge, rim, platform
// measurements, lifecycle. The first failure decides the reason.
Verdict verify_report(const AttestationReport& report, const Challenge& expected_challenge,
                      const ReferenceValues& refs);
Verdict verify_report(ByteView encoded, const Challenge& expected_challenge,
                      const ReferenceValues& refs);

}  // namespace realmsim::attestation
