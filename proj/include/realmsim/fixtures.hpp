#pragma once

#include <cstdint>
#include <vector>

#include "realmsim/exchange.hpp"
#include "realmsim/image.hpp"
#include "realmsim/model.hpp"
#include "realmsim/realm_runtime.hpp"
#include "realmsim/rmm.hpp"

// Fixed identities and artifacts shared by the CLI, tests and benchmarks.
// Long-lived keys come from fixed labels; the run seed only drives nonces,
// ephemeral keys and jitter.
namespace realmsim::fixtures {

inline constexpr uint64_t kImage98MB = 98'000'000;
inline constexpr uint64_t kImage139MB = 139'000'000;
inline constexpr uint64_t kRealmBase = 0x8000'0000;
inline constexpr size_t kProgramGranules = 4;
inline constexpr uint32_t kClasses = 3;
inline constexpr uint32_t kFeatures = 4;
inline constexpr uint64_t kModelSeed = 42;

crypto::Seed labelled_seed(std::string_view label);

crypto::SigningKey verifier_key();
crypto::Seed provider_static_seed();
PublicKey provider_public_key();
crypto::Seed hes_seed();
PublicKey platform_public_key();

std::vector<Digest> firmware_measurements();
PlatformConfig platform(attestation::LifecycleState lifecycle = attestation::LifecycleState::kSecured);
MachineConfig machine(CostProfile profile = {});

Personalization personalization();
RuntimeConfig runtime_config(uint32_t update_every = 40);
// Program granules; the first one starts with the runtime config.
std::vector<image::Segment> runtime_segments(const RuntimeConfig& config);
// Signed bundle whose reference values accept the fixture platform.
image::RealmImage realm_image(uint64_t image_size_bytes = kImage98MB, uint32_t update_every = 40);
attestation::ReferenceValues reference_values(const image::RealmImage& image);

model::ModelPackage model(uint64_t version = 1, model::Policy policy = {});
std::vector<exchange::InferenceInput> inputs(size_t count, uint32_t features = kFeatures,
                                             uint64_t seed = 1);

}  // namespace realmsim::fixtures
