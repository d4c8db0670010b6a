#include "realmsim/sweep.hpp"

#include <algorithm>
#include <map>
#include <optional>

#include "realmsim/fixtures.hpp"
#include "realmsim/rmm.hpp"
#include "realmsim/rng.hpp"

namespace realmsim::sweep {

std::vector<uint8_t> mutation_values(uint8_t original, MutationSet set) {
  std::vector<uint8_t> out;
  if (set == MutationSet::kAllByteValues) {
    for (int v = 0; v < 256; ++v) {
      if (v != original) out.push_back(static_cast<uint8_t>(v));
    }
    return out;
  }
  for (int bit = 0; bit < 8; ++bit) out.push_back(static_cast<uint8_t>(original ^ (1u << bit)));
  out.push_back(static_cast<uint8_t>(~original));
  return out;
}

namespace {

void tamper_offset(ByteView report, size_t offset, const Challenge& challenge,
                   const attestation::ReferenceValues& refs, MutationSet set, Bytes& scratch,
                   TamperResult& out) {
  for (uint8_t v : mutation_values(report[offset], set)) {
    scratch[offset] = v;
    attestation::Verdict verdict = attestation::verify_report(scratch, challenge, refs);
    ++out.mutations;
    if (verdict.accepted) {
      out.accepted.push_back({offset, v});
    } else {
      ++out.rejected;
      ++out.by_reason[static_cast<size_t>(verdict.reason)];
    }
  }
  scratch[offset] = report[offset];
}

void merge(TamperResult& into, const TamperResult& from) {
  into.mutations += from.mutations;
  into.rejected += from.rejected;
  for (size_t i = 0; i < into.by_reason.size(); ++i) into.by_reason[i] += from.by_reason[i];
  into.accepted.insert(into.accepted.end(), from.accepted.begin(), from.accepted.end());
}

}  // namespace

TamperResult tamper_sweep_serial(ByteView report, const Challenge& challenge,
                                 const attestation::ReferenceValues& refs, MutationSet set) {
  TamperResult result;
  Bytes scratch(report.begin(), report.end());
  for (size_t offset = 0; offset < report.size(); ++offset) {
    tamper_offset(report, offset, challenge, refs, set, scratch, result);
  }
  return result;
}

TamperResult tamper_sweep(ByteView report, const Challenge& challenge,
                          const attestation::ReferenceValues& refs, MutationSet set) {
  TamperResult result;
  const long n = static_cast<long>(report.size());
#pragma omp parallel
  {
    TamperResult local;
    Bytes scratch(report.begin(), report.end());
#pragma omp for schedule(dynamic, 8)
    for (long offset = 0; offset < n; ++offset) {
      tamper_offset(report, static_cast<size_t>(offset), challenge, refs, set, scratch, local);
    }
#pragma omp critical
    merge(result, local);
  }
  std::sort(result.accepted.begin(), result.accepted.end());
  return result;
}

namespace {

constexpr GranuleLayout kFuzzLayout{8, 1, 1};

// A guest that pokes at its environment: measurement slots (including an
// invalid one), random granules, host calls.
class ProbeGuest final : public Guest {
 public:
  explicit ProbeGuest(uint64_t seed) : rng_(seed) {}
  void step(GuestEnv& env) override {
    switch (rng_.below(4)) {
      case 0: env.measurement_extend(rng_.below(attestation::kRemSlots + 1), rng_.bytes<32>()); break;
      case 1: env.read(rng_.below(kFuzzLayout.normal + 3), 0, 16); break;
      case 2: env.write(rng_.below(kFuzzLayout.normal + 3), 0, Bytes{1, 2, 3}); break;
      default: env.host_call(Bytes(rng_.below(300), 0x5a)); break;
    }
  }
  std::unique_ptr<Guest> clone() const override { return std::make_unique<ProbeGuest>(*this); }

 private:
  DeterministicRng rng_;
};

struct SequenceState {
  std::map<uint64_t, Digest> rim_at_activation;
  std::vector<GranuleState> reserved_states;
};

World random_world(DeterministicRng& rng, World usual) {
  return rng.below(10) == 0 ? kAllWorlds[rng.below(4)] : usual;
}

void run_command(Rmm& rmm, DeterministicRng& rng, uint64_t created) {
  RealmId realm{1 + rng.below(created + 1)};
  GranuleId granule = rng.below(rmm.memory().size() + 1);
  switch (rng.below(10)) {
    case 0: {
      attestation::RealmParams params;
      params.personalization[0] = static_cast<uint8_t>(rng.below(256));
      params.entry_point = {rng.below(2), rng.below(kGranuleSize)};
      rmm.execute(RmiCommand{random_world(rng, World::kNormal), rmi::RealmCreate{params}});
      break;
    }
    case 1:
      rmm.execute(RmiCommand{random_world(rng, World::kNormal), rmi::GranuleDelegate{granule}});
      break;
    case 2:
      rmm.execute(RmiCommand{random_world(rng, World::kNormal), rmi::GranuleUndelegate{granule}});
      break;
    case 3: {
      Bytes content(rng.below(8) == 0 ? 100 : kGranuleSize, static_cast<uint8_t>(rng.below(256)));
      rmm.execute(RmiCommand{random_world(rng, World::kNormal),
                             rmi::DataCreate{realm, granule, content, rng.below(1 << 20)}});
      break;
    }
    case 4:
      if (rng.below(2) == 0 && rmm.guest(realm) == nullptr) {
        rmm.attach_guest(realm, std::make_unique<ProbeGuest>(rng.next()));
      }
      rmm.execute(RmiCommand{random_world(rng, World::kNormal), rmi::RealmActivate{realm}});
      break;
    case 5:
      rmm.execute(RmiCommand{random_world(rng, World::kNormal), rmi::RecEnter{realm}});
      break;
    case 6:
      rmm.execute(RmiCommand{random_world(rng, World::kNormal), rmi::RealmDestroy{realm}});
      break;
    case 7:
      // Signing is the expensive path; keep it rare.
      if (rng.below(8) == 0) {
        rmm.execute(RsiCall{random_world(rng, World::kRealm),
                            rsi::AttestationToken{realm, rng.bytes<64>()}});
      } else {
        rmm.execute(RsiCall{random_world(rng, World::kRealm), rsi::HostCall{realm, Bytes{7}}});
      }
      break;
    case 8:
      rmm.execute(RsiCall{random_world(rng, World::kRealm),
                          rsi::MeasurementExtend{realm, rng.below(attestation::kRemSlots + 1),
                                                 rng.bytes<32>()}});
      break;
    default:
      rmm.memory().read(random_world(rng, World::kNormal), granule, 0, 8);
      break;
  }
}

std::optional<std::string> check_invariants(const Rmm& rmm, SequenceState& state) {
  const GranuleSpace& mem = rmm.memory();
  std::map<uint64_t, size_t> owned;
  for (GranuleId g = 0; g < mem.size(); ++g) {
    const Granule& gr = mem.granule(g);
    if (g >= kFuzzLayout.normal && gr.state != state.reserved_states[g - kFuzzLayout.normal]) {
      return "reserved granule " + std::to_string(g) + " changed state";
    }
    if (gr.state == GranuleState::kRealmOwned) ++owned[gr.owner.value];
  }
  for (RealmId id : rmm.realms()) {
    const RealmDescriptor& d = rmm.descriptor(id);
    if (d.history.empty() || d.history.front() != RealmState::kNew) return "history must start New";
    for (size_t i = 1; i < d.history.size(); ++i) {
      if (static_cast<int>(d.history[i]) <= static_cast<int>(d.history[i - 1])) {
        return "realm " + std::to_string(id.value) + " went backwards";
      }
    }
    if (d.history.back() != d.state) return "state disagrees with history";
    if (d.state != RealmState::kNew) {
      auto [it, inserted] = state.rim_at_activation.try_emplace(id.value, d.rim);
      if (!inserted && it->second != d.rim) {
        return "rim of realm " + std::to_string(id.value) + " changed after activation";
      }
    }
    if (d.state == RealmState::kDestroyed && !d.granules.empty()) return "destroyed realm holds granules";
    for (GranuleId g : d.granules) {
      const Granule& gr = mem.granule(g);
      if (gr.state != GranuleState::kRealmOwned || gr.owner != id) {
        return "descriptor lists granule " + std::to_string(g) + " it does not own";
      }
    }
    if (owned[id.value] != d.granules.size()) return "ownership count mismatch";
  }
  return std::nullopt;
}

void run_sequence(const FuzzConfig& config, size_t index, FuzzResult& out) {
  DeterministicRng rng = DeterministicRng::derive(config.seed, "fuzz-" + std::to_string(index));
  MachineConfig mc = fixtures::machine();
  mc.layout = kFuzzLayout;
  Rmm rmm(mc);
  rmm.ledger().set_keep_entries(false);
  SequenceState state;
  for (GranuleId g = kFuzzLayout.normal; g < rmm.memory().size(); ++g) {
    state.reserved_states.push_back(rmm.memory().granule(g).state);
  }
  ++out.sequences;
  for (size_t c = 0; c < config.commands_per_sequence; ++c) {
    uint64_t created = rmm.realms().size();
    size_t active_before = 0, destroyed_before = 0;
    for (RealmId id : rmm.realms()) {
      active_before += rmm.descriptor(id).state != RealmState::kNew;
      destroyed_before += rmm.descriptor(id).state == RealmState::kDestroyed;
    }
    ++out.commands;
    try {
      run_command(rmm, rng, created);
      ++out.succeeded;
    } catch (const Error& e) {
      ++out.errors[static_cast<size_t>(e.code())];
    }
    size_t active_after = 0, destroyed_after = 0;
    for (RealmId id : rmm.realms()) {
      active_after += rmm.descriptor(id).state != RealmState::kNew;
      destroyed_after += rmm.descriptor(id).state == RealmState::kDestroyed;
    }
    out.activations += active_after - active_before;
    out.destroys += destroyed_after - destroyed_before;
    if (auto violation = check_invariants(rmm, state)) {
      out.violations.push_back("sequence " + std::to_string(index) + " command " +
                               std::to_string(c) + ": " + *violation);
      return;
    }
  }
}

void merge(FuzzResult& into, const FuzzResult& from) {
  into.sequences += from.sequences;
  into.commands += from.commands;
  into.succeeded += from.succeeded;
  for (size_t i = 0; i < into.errors.size(); ++i) into.errors[i] += from.errors[i];
  into.activations += from.activations;
  into.destroys += from.destroys;
  into.violations.insert(into.violations.end(), from.violations.begin(), from.violations.end());
}

}  // namespace

FuzzResult fuzz_lifecycle_serial(const FuzzConfig& config) {
  FuzzResult result;
  for (size_t i = 0; i < config.sequences; ++i) run_sequence(config, i, result);
  std::sort(result.violations.begin(), result.violations.end());
  return result;
}

FuzzResult fuzz_lifecycle(const FuzzConfig& config) {
  FuzzResult result;
  const long n = static_cast<long>(config.sequences);
#pragma omp parallel
  {
    FuzzResult local;
#pragma omp for schedule(dynamic, 64)
    for (long i = 0; i < n; ++i) run_sequence(config, static_cast<size_t>(i), local);
#pragma omp critical
    merge(result, local);
  }
  std::sort(result.violations.begin(), result.violations.end());
  return result;
}

}  // namespace realmsim::sweep
