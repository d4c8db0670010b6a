#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "realmsim/attestation.hpp"
#include "realmsim/error.hpp"

// Bulk verification kernels. Each has a serial reference and an OpenMP
// variant that must produce identical results.
namespace realmsim::sweep {

enum class MutationSet {
  kBitFlips,       // each of the 8 single-bit flips plus the complement
  kAllByteValues,  // all 255 replacement values
};

struct Mutation {
  size_t offset;
  uint8_t value;
  bool operator==(const Mutation&) const = default;
  auto operator<=>(const Mutation&) const = default;
};

struct TamperResult {
  size_t mutations = 0;
  size_t rejected = 0;
  std::array<size_t, 7> by_reason{};  // indexed by RejectReason
  std::vector<Mutation> accepted;     // sorted; should stay empty

  bool operator==(const TamperResult&) const = default;
};

std::vector<uint8_t> mutation_values(uint8_t original, MutationSet set);

TamperResult tamper_sweep_serial(ByteView report, const Challenge& challenge,
                                 const attestation::ReferenceValues& refs, MutationSet set);
TamperResult tamper_sweep(ByteView report, const Challenge& challenge,
                          const attestation::ReferenceValues& refs, MutationSet set);

struct FuzzConfig {
  uint64_t seed = 0;
  size_t sequences = 100'000;
  size_t commands_per_sequence = 16;
};

inline constexpr size_t kErrorCodeCount = static_cast<size_t>(ErrorCode::kIo) + 1;

struct FuzzResult {
  size_t sequences = 0;
  size_t commands = 0;
  size_t succeeded = 0;
  std::array<size_t, kErrorCodeCount> errors{};
  size_t activations = 0;
  size_t destroys = 0;
  std::vector<std::string> violations;  // "sequence N command M: what", sorted

  bool operator==(const FuzzResult&) const = default;
};

// Random RMI/RSI command sequences against a fresh small machine. Only
// realmsim::Error is caught; invariants are checked after every command.
FuzzResult fuzz_lifecycle_serial(const FuzzConfig& config);
FuzzResult fuzz_lifecycle(const FuzzConfig& config);

}  // namespace realmsim::sweep
