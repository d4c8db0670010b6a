#include "realmsim/fixtures.hpp"

#include <algorithm>

#include "realmsim/rng.hpp"

namespace realmsim::fixtures {

crypto::Seed labelled_seed(std::string_view label) {
  return crypto::sha256({as_bytes("realmsim fixture "), as_bytes(label)});
}

crypto::SigningKey verifier_key() { return crypto::SigningKey::from_seed(labelled_seed("verifier")); }

crypto::Seed provider_static_seed() { return labelled_seed("provider"); }

PublicKey provider_public_key() {
  return crypto::KxKeyPair::from_seed(provider_static_seed()).public_key;
}

crypto::Seed hes_seed() { return labelled_seed("hes"); }

PublicKey platform_public_key() { return crypto::SigningKey::from_seed(hes_seed()).public_key(); }

std::vector<Digest> firmware_measurements() {
  return {crypto::sha256(as_bytes("firmware bl1")), crypto::sha256(as_bytes("firmware bl2")),
          crypto::sha256(as_bytes("firmware el3 monitor")), crypto::sha256(as_bytes("firmware rmm"))};
}

PlatformConfig platform(attestation::LifecycleState lifecycle) {
  return {firmware_measurements(), lifecycle, hes_seed()};
}

MachineConfig machine(CostProfile profile) {
  MachineConfig m;
  m.profile = profile;
  m.platform = platform();
  return m;
}

Personalization personalization() {
  Personalization p{};
  std::string_view tag = "image-classifier realm v1";
  std::copy(tag.begin(), tag.end(), p.begin());
  return p;
}

RuntimeConfig runtime_config(uint32_t update_every) {
  return {provider_public_key(), kClasses, kFeatures, update_every};
}

std::vector<image::Segment> runtime_segments(const RuntimeConfig& config) {
  std::vector<image::Segment> segments;
  Bytes header = config.encode();
  for (size_t i = 0; i < kProgramGranules; ++i) {
    Bytes content(kGranuleSize, 0);
    size_t start = i == 0 ? header.size() : 0;
    if (i == 0) std::copy(header.begin(), header.end(), content.begin());
    // Stand-in program text: a hash stream unique to each granule.
    for (size_t off = start, block = 0; off < content.size(); off += 32, ++block) {
      Bytes counter;
      append_le64(counter, i);
      append_le64(counter, block);
      Digest d = crypto::sha256({as_bytes("realm runtime text"), counter});
      std::copy_n(d.begin(), std::min<size_t>(32, content.size() - off), content.begin() + off);
    }
    segments.push_back({kRealmBase + i * kGranuleSize, std::move(content)});
  }
  return segments;
}

attestation::ReferenceValues reference_values(const image::RealmImage& image) {
  return {image.compute_rim(), {firmware_measurements()}, platform_public_key(), true};
}

image::RealmImage realm_image(uint64_t image_size_bytes, uint32_t update_every) {
  image::RealmImage img;
  img.segments = runtime_segments(runtime_config(update_every));
  img.entry_point = {0, RuntimeConfig::kEncodedSize};
  img.personalization = personalization();
  img.metadata = {image_size_bytes, "inference runtime"};
  img.refs = reference_values(img);
  return image::sign(std::move(img), verifier_key());
}

model::ModelPackage model(uint64_t version, model::Policy policy) {
  return model::fixture_model(kModelSeed + version - 1, kClasses, kFeatures, version, policy);
}

std::vector<exchange::InferenceInput> inputs(size_t count, uint32_t features, uint64_t seed) {
  DeterministicRng rng = DeterministicRng::derive(seed, "inputs");
  std::vector<exchange::InferenceInput> out;
  for (size_t i = 0; i < count; ++i) {
    exchange::InferenceInput in{i + 1, {}};
    for (uint32_t d = 0; d < features; ++d) {
      in.values.push_back(static_cast<int32_t>(rng.below(2 * model::kOne + 1)) - model::kOne);
    }
    out.push_back(std::move(in));
  }
  return out;
}

}  // namespace realmsim::fixtures
