#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "realmsim/attestation.hpp"
#include "realmsim/crypto.hpp"

namespace realmsim::image {

struct Segment {
  uint64_t target_addr = 0;
  Bytes content;  // exactly one granule
  bool operator==(const Segment&) const = default;
};

struct Metadata {
  uint64_t image_size_bytes = 0;  // size of the image this bundle stands for
  std::string description;
  bool operator==(const Metadata&) const = default;
};

// A realm image as published by the verifier, together with the reference
// values a provider appraises reports against.
//
//   {1: {1: [{1: addr, 2: content}...], 2: {1: granule, 2: offset},
//        3: personalization, 4: {1: size, 2: description}},
//    2: reference values,
//    3: signature over encode({1: body, 2: reference values})}
struct RealmImage {
  std::vector<Segment> segments;
  attestation::EntryPoint entry_point;
  Personalization personalization{};
  Metadata metadata;
  attestation::ReferenceValues refs;
  Signature signature{};

  attestation::RealmParams params() const { return {personalization, entry_point}; }
  // Creation record followed by every segment in order.
  Digest compute_rim() const;
  Bytes signed_payload() const;
  Bytes encode() const;
  static RealmImage decode(ByteView bytes);

  bool operator==(const RealmImage&) const = default;
};

// Sets refs.expected_rim to the recomputed chain and signs the bundle.
RealmImage sign(RealmImage image, const crypto::SigningKey& verifier);

// Decodes and checks rim consistency, then the verifier signature. Every
// failure is Error(ImageVerification).
RealmImage verify_bundle(ByteView bytes, const PublicKey& verifier_key);
RealmImage fetch_realm_image(const std::filesystem::path& path, const PublicKey& verifier_key);

}  // namespace realmsim::image
