#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "realmsim/world.hpp"

namespace realmsim {

enum class EventType {
  kWorldSwitch,
  kVmEnter,
  kInferenceCompute,
  kPopulate,  // per byte
  kBootBaseRealm,
  kBootBaseNormal,
  kTerminationBaseRealm,
  kTerminationBaseNormal,
  kIdle,  // per tick
  kMemoryAccess,
};

inline constexpr size_t kEventTypeCount = 10;

std::string_view event_name(EventType type);
// Throws Error(Config) for names outside the closed set.
EventType event_from_name(std::string_view name);

enum class Phase { kSetup, kBoot, kProvisioning, kInference, kUpdate, kTermination };
inline constexpr size_t kPhaseCount = 6;
std::string_view phase_name(Phase phase);

// Modeled instruction cost per event (per byte for populate, per tick for
// idle). Profiles are plain data; calibration produces one from measured
// endpoints.
struct CostProfile {
  double world_switch_cost = 0;
  double vm_enter_cost = 0;
  double inference_compute_cost = 0;
  double populate_cost_per_byte = 0;
  double boot_base_realm = 0;
  double boot_base_normal = 0;
  double termination_base_realm = 0;
  double termination_base_normal = 0;
  double idle_cost_per_tick = 0;
  double memory_access_cost = 0;

  double cost_of(EventType type) const;
  double& cost_of(EventType type);

  // Throws Error(Config) on negative or non-finite entries.
  void validate() const;

  nlohmann::ordered_json to_json() const;
  // Unknown keys are rejected; missing keys default to zero.
  static CostProfile from_json(const nlohmann::json& j);
  static CostProfile load(const std::string& path);

  bool operator==(const CostProfile&) const = default;
};

struct LedgerEntry {
  EventType type;
  std::optional<World> actor;  // empty for idle
  uint64_t tick;
  Phase phase;
  uint64_t size;
  uint64_t instructions;
};

// Append-only record of modeled costs. Phase totals are kept in step with
// the entry list.
class CostLedger {
 public:
  explicit CostLedger(CostProfile profile = {});

  const CostProfile& profile() const { return profile_; }

  void record(EventType type, std::optional<World> actor, uint64_t size = 1);
  void record(std::string_view type_name, std::optional<World> actor, uint64_t size = 1);

  // Advances the simulated clock by one tick and charges idle cost for it.
  void advance_tick();
  uint64_t tick() const { return tick_; }

  void set_phase(Phase phase) { phase_ = phase; }
  Phase phase() const { return phase_; }

  const std::vector<LedgerEntry>& entries() const { return entries_; }

  uint64_t phase_total(Phase phase) const { return totals_[static_cast<size_t>(phase)]; }
  uint64_t phase_ticks(Phase phase) const { return ticks_[static_cast<size_t>(phase)]; }
  uint64_t total() const;
  size_t count(EventType type) const;
  size_t count(EventType type, Phase phase) const;

  // Skip storing individual entries; totals and counts are still maintained.
  void set_keep_entries(bool keep) { keep_entries_ = keep; }

 private:
  CostProfile profile_;
  std::vector<LedgerEntry> entries_;
  std::array<uint64_t, kPhaseCount> totals_{};
  std::array<uint64_t, kPhaseCount> ticks_{};
  std::array<std::array<size_t, kPhaseCount>, kEventTypeCount> counts_{};
  uint64_t tick_ = 0;
  Phase phase_ = Phase::kSetup;
  bool keep_entries_ = true;
};

// Workload-only instructions from a measured total and an idle baseline over
// the same duration. Throws Error(Measurement) when idle exceeds total.
uint64_t baseline_subtract(uint64_t total, uint64_t idle);

}  // namespace realmsim
