#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "realmsim/cost_model.hpp"
#include "realmsim/exchange.hpp"
#include "realmsim/fixtures.hpp"
#include "realmsim/provider.hpp"
#include "realmsim/realm_runtime.hpp"
#include "realmsim/rmm.hpp"

namespace realmsim {

enum class Scenario { kRealmVm, kNormalVm };
std::string_view scenario_name(Scenario scenario);

enum class ProviderTransport { kInProcess, kTcp };

struct PipelineConfig {
  Scenario scenario = Scenario::kRealmVm;
  // Bundle source, in order of precedence: raw bytes, file, generated fixture.
  std::optional<Bytes> image_bundle;
  std::optional<std::filesystem::path> image_path;
  uint64_t image_size_bytes = fixtures::kImage98MB;
  uint32_t update_every = 40;

  ProviderTransport transport = ProviderTransport::kInProcess;
  std::vector<exchange::InferenceInput> inputs;  // request ids are reassigned
  size_t inputs_per_entry = 1;
  size_t exchange_slots = exchange::kDefaultSlots;
  model::Policy policy;
  bool publish_update = false;
  CostProfile profile;
  attestation::LifecycleState lifecycle = attestation::LifecycleState::kSecured;
  uint64_t seed = 0;

  // Test hook: after every entry the host tries to read each realm granule.
  bool hostile_host_reads = false;

  // Keys: image_path, image_size_bytes, update_every, provider ("inprocess"
  // or "tcp"), inputs_path, input_count, inputs_per_entry,
  // policy_expectation, publish_update, cost_profile (object or path),
  // seed. Relative paths resolve against `base`.
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base);
  static PipelineConfig load(const std::filesystem::path& path);
};

// One input per line, each a JSON array of integers.
std::vector<exchange::InferenceInput> load_inputs(const std::filesystem::path& path);

struct TranscriptEntry {
  std::string step;  // "1".."8", "terminate" or "abort"
  uint64_t tick = 0;
  std::string outcome;
  nlohmann::ordered_json detail = nlohmann::ordered_json::object();

  nlohmann::ordered_json to_json() const;
};

struct HostileReadStats {
  size_t attempts = 0;
  size_t violations = 0;
  bool realm_state_unchanged = true;
};

struct PipelineResult {
  bool completed = false;
  std::optional<std::string> failed_step;
  std::string error;
  std::optional<std::string> termination_reason;

  std::vector<TranscriptEntry> transcript;
  std::vector<exchange::InferenceOutput> outputs;
  size_t normal_granules_before = 0;
  size_t normal_granules_after = 0;

  std::shared_ptr<Rmm> machine;  // final machine state, ledger included
  std::optional<RealmDescriptor> realm;
  RuntimeDiagnostics diagnostics;
  provider::SessionTranscript provider_transcript;
  std::vector<transport::LinkRecord> link_log;
  Bytes model_weights;  // what the host must never see
  std::optional<Bytes> provisioning_report;
  std::optional<Challenge> provisioning_challenge;
  attestation::ReferenceValues refs;
  HostileReadStats hostile;

  const CostLedger& ledger() const { return machine->ledger(); }
  // JSON lines, one entry per line, trailing newline.
  std::string transcript_jsonl() const;
};

PipelineResult run_pipeline(const PipelineConfig& config);

// Checks 1,2,3,4,5,6,(7|8)*,terminate with step 7 only after readiness.
// Returns a description of the first violation.
std::optional<std::string> validate_transcript(const std::vector<TranscriptEntry>& transcript);

}  // namespace realmsim
