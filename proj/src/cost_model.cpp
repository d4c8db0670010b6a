#include "realmsim/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "realmsim/error.hpp"

namespace realmsim {

namespace {

constexpr std::array<std::string_view, kEventTypeCount> kEventNames = {
    "world_switch",          "vm_enter",       "inference_compute",
    "populate",              "boot_base_realm", "boot_base_normal",
    "termination_base_realm", "termination_base_normal", "idle",
    "memory_access",
};

// Profile field names, indexed like EventType.
constexpr std::array<std::string_view, kEventTypeCount> kProfileKeys = {
    "world_switch_cost",      "vm_enter_cost",          "inference_compute_cost",
    "populate_cost_per_byte", "boot_base_realm",        "boot_base_normal",
    "termination_base_realm", "termination_base_normal", "idle_cost_per_tick",
    "memory_access_cost",
};

}  // namespace

std::string_view world_name(World world) {
  switch (world) {
    case World::kNormal: return "Normal";
    case World::kRealm: return "Realm";
    case World::kSecure: return "Secure";
    case World::kRoot: return "Root";
  }
  return "?";
}

std::string_view event_name(EventType type) { return kEventNames[static_cast<size_t>(type)]; }

EventType event_from_name(std::string_view name) {
  for (size_t i = 0; i < kEventNames.size(); ++i) {
    if (kEventNames[i] == name) return static_cast<EventType>(i);
  }
  throw Error(ErrorCode::kConfig, "unknown event type '" + std::string(name) + "'");
}

std::string_view phase_name(Phase phase) {
  switch (phase) {
    case Phase::kSetup: return "setup";
    case Phase::kBoot: return "boot";
    case Phase::kProvisioning: return "provisioning";
    case Phase::kInference: return "inference";
    case Phase::kUpdate: return "update";
    case Phase::kTermination: return "termination";
  }
  return "?";
}

double CostProfile::cost_of(EventType type) const {
  return const_cast<CostProfile*>(this)->cost_of(type);
}

double& CostProfile::cost_of(EventType type) {
  switch (type) {
    case EventType::kWorldSwitch: return world_switch_cost;
    case EventType::kVmEnter: return vm_enter_cost;
    case EventType::kInferenceCompute: return inference_compute_cost;
    case EventType::kPopulate: return populate_cost_per_byte;
    case EventType::kBootBaseRealm: return boot_base_realm;
    case EventType::kBootBaseNormal: return boot_base_normal;
    case EventType::kTerminationBaseRealm: return termination_base_realm;
    case EventType::kTerminationBaseNormal: return termination_base_normal;
    case EventType::kIdle: return idle_cost_per_tick;
    case EventType::kMemoryAccess: return memory_access_cost;
  }
  throw Error(ErrorCode::kConfig, "unknown event type");
}

void CostProfile::validate() const {
  for (size_t i = 0; i < kEventTypeCount; ++i) {
    double v = cost_of(static_cast<EventType>(i));
    if (!std::isfinite(v) || v < 0) {
      throw Error(ErrorCode::kConfig,
                  std::string(kProfileKeys[i]) + " must be finite and nonnegative");
    }
  }
}

nlohmann::ordered_json CostProfile::to_json() const {
  nlohmann::ordered_json j;
  for (size_t i = 0; i < kEventTypeCount; ++i) {
    j[std::string(kProfileKeys[i])] = cost_of(static_cast<EventType>(i));
  }
  return j;
}

CostProfile CostProfile::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "cost profile must be a JSON object");
  CostProfile profile;
  for (const auto& [key, value] : j.items()) {
    auto it = std::find(kProfileKeys.begin(), kProfileKeys.end(), key);
    if (it == kProfileKeys.end()) {
      throw Error(ErrorCode::kConfig, "unknown cost profile field '" + key + "'");
    }
    if (!value.is_number()) throw Error(ErrorCode::kConfig, key + " must be a number");
    profile.cost_of(static_cast<EventType>(it - kProfileKeys.begin())) = value.get<double>();
  }
  profile.validate();
  return profile;
}

CostProfile CostProfile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open profile " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, path + ": " + e.what());
  }
  return from_json(j);
}

CostLedger::CostLedger(CostProfile profile) : profile_(profile) { profile_.validate(); }

void CostLedger::record(EventType type, std::optional<World> actor, uint64_t size) {
  auto instructions = static_cast<uint64_t>(std::llround(profile_.cost_of(type) * static_cast<double>(size)));
  auto phase_index = static_cast<size_t>(phase_);
  totals_[phase_index] += instructions;
  counts_[static_cast<size_t>(type)][phase_index] += 1;
  if (keep_entries_) entries_.push_back({type, actor, tick_, phase_, size, instructions});
}

void CostLedger::record(std::string_view type_name, std::optional<World> actor, uint64_t size) {
  record(event_from_name(type_name), actor, size);
}

void CostLedger::advance_tick() {
  ++tick_;
  ticks_[static_cast<size_t>(phase_)] += 1;
  record(EventType::kIdle, std::nullopt);
}

uint64_t CostLedger::total() const {
  uint64_t sum = 0;
  for (uint64_t t : totals_) sum += t;
  return sum;
}

size_t CostLedger::count(EventType type) const {
  size_t n = 0;
  for (size_t c : counts_[static_cast<size_t>(type)]) n += c;
  return n;
}

size_t CostLedger::count(EventType type, Phase phase) const {
  return counts_[static_cast<size_t>(type)][static_cast<size_t>(phase)];
}

uint64_t baseline_subtract(uint64_t total, uint64_t idle) {
  if (idle > total) {
    throw Error(ErrorCode::kMeasurement, "idle baseline " + std::to_string(idle) +
                                             " exceeds measured total " + std::to_string(total));
  }
  return total - idle;
}

}  // namespace realmsim
