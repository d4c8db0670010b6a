#include "realmsim/orchestrator.hpp"

#include <fstream>
#include <sstream>

#include "realmsim/error.hpp"
#include "realmsim/image.hpp"
#include "realmsim/rng.hpp"
#include "realmsim/transport.hpp"

namespace realmsim {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string_view scenario_name(Scenario scenario) {
  return scenario == Scenario::kRealmVm ? "RealmVm" : "NormalVm";
}

std::vector<exchange::InferenceInput> load_inputs(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open inputs " + path.string());
  std::vector<exchange::InferenceInput> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      exchange::InferenceInput input{out.size() + 1, {}};
      for (const auto& v : j) input.values.push_back(v.get<int32_t>());
      if (!j.is_array()) throw Error(ErrorCode::kConfig, "not an array");
      out.push_back(std::move(input));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kConfig, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j, const fs::path& base) {
  static const std::vector<std::string> kKeys = {
      "image_path",   "image_size_bytes",   "update_every",   "provider",
      "inputs_path",  "input_count",        "inputs_per_entry", "policy_expectation",
      "publish_update", "cost_profile",     "seed"};
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "pipeline config must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
      throw Error(ErrorCode::kConfig, "unknown pipeline config key '" + key + "'");
    }
  }
  auto resolve = [&base](const std::string& p) {
    return fs::path(p).is_absolute() ? fs::path(p) : base / p;
  };
  PipelineConfig c;
  try {
    if (j.contains("image_path")) c.image_path = resolve(j["image_path"].get<std::string>());
    c.image_size_bytes = j.value("image_size_bytes", c.image_size_bytes);
    c.update_every = j.value("update_every", c.update_every);
    std::string provider = j.value("provider", std::string("inprocess"));
    if (provider == "tcp") {
      c.transport = ProviderTransport::kTcp;
    } else if (provider != "inprocess") {
      throw Error(ErrorCode::kConfig, "provider must be 'inprocess' or 'tcp'");
    }
    if (j.contains("inputs_path")) {
      c.inputs = load_inputs(resolve(j["inputs_path"].get<std::string>()));
    } else {
      c.inputs = fixtures::inputs(j.value("input_count", size_t{40}));
    }
    c.inputs_per_entry = j.value("inputs_per_entry", c.inputs_per_entry);
    if (j.contains("policy_expectation")) c.policy = model::Policy::from_json(j["policy_expectation"]);
    c.publish_update = j.value("publish_update", false);
    if (j.contains("cost_profile")) {
      const auto& p = j["cost_profile"];
      c.profile = p.is_string() ? CostProfile::load(resolve(p.get<std::string>()))
                                : CostProfile::from_json(p);
    }
    c.seed = j.value("seed", uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, e.what());
  }
  if (c.inputs_per_entry == 0) throw Error(ErrorCode::kConfig, "inputs_per_entry must be positive");
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

ordered_json TranscriptEntry::to_json() const {
  ordered_json j;
  j["step"] = step;
  j["tick"] = tick;
  j["outcome"] = outcome;
  for (const auto& [k, v] : detail.items()) j[k] = v;
  return j;
}

std::string PipelineResult::transcript_jsonl() const {
  std::string out;
  for (const TranscriptEntry& e : transcript) {
    out += e.to_json().dump();
    out += '\n';
  }
  return out;
}

std::optional<std::string> validate_transcript(const std::vector<TranscriptEntry>& transcript) {
  static const char* kPrefix[] = {"1", "2", "3", "4", "5", "6"};
  size_t i = 0;
  for (const char* want : kPrefix) {
    if (i >= transcript.size()) return std::string("missing step ") + want;
    if (transcript[i].step != want) {
      return "entry " + std::to_string(i) + " is step " + transcript[i].step + ", expected " + want;
    }
    ++i;
  }
  for (; i < transcript.size() && (transcript[i].step == "7" || transcript[i].step == "8"); ++i) {
  }
  if (i >= transcript.size() || transcript[i].step != "terminate") {
    return "entry " + std::to_string(i) + " should be the termination";
  }
  if (i + 1 != transcript.size()) return "entries after termination";
  for (size_t k = 1; k < transcript.size(); ++k) {
    if (transcript[k].tick < transcript[k - 1].tick) return "ticks decrease at entry " + std::to_string(k);
  }
  return std::nullopt;
}

namespace {

// Stand-in for a VM run by the hypervisor without RMM involvement. Memory
// access uses normal-world rights and there is no attestation.
class NormalVmEnv final : public GuestEnv {
 public:
  NormalVmEnv(Rmm& machine, const std::vector<GranuleId>& image, uint64_t& inferences,
              std::optional<ExitReason>& exit)
      : m_(machine), image_(image), inferences_(inferences), exit_(exit) {}

  World world() const override { return World::kNormal; }
  Bytes read(GranuleId g, size_t offset, size_t length) override {
    return m_.memory().read(World::kNormal, g, offset, length);
  }
  void write(GranuleId g, size_t offset, ByteView data) override {
    m_.memory().write(World::kNormal, g, offset, data);
  }
  GranuleId image_granule(size_t index) const override {
    if (index >= image_.size()) throw Error(ErrorCode::kBounds, "image granule");
    return image_[index];
  }
  uint64_t now() const override { return m_.now(); }
  void measurement_extend(size_t, const Digest&) override {}
  attestation::AttestationReport attestation_token(const Challenge&) override {
    throw Error(ErrorCode::kInterface, "no attestation outside a realm");
  }
  void host_call(ByteView payload) override {
    exit_ = ExitReason{ExitKind::kHostCall, Bytes(payload.begin(), payload.end())};
  }
  void request_termination(std::string_view reason) override {
    host_call(as_bytes("terminate:" + std::string(reason)));
    exit_->kind = ExitKind::kTerminationRequest;
  }
  void charge(EventType event) override { m_.ledger().record(event, World::kNormal); }
  uint64_t inference_count() const override { return inferences_; }
  void count_inference() override { ++inferences_; }

 private:
  Rmm& m_;
  const std::vector<GranuleId>& image_;
  uint64_t& inferences_;
  std::optional<ExitReason>& exit_;
};

bool is_ready(const Bytes& payload) {
  return std::string_view(reinterpret_cast<const char*>(payload.data()), payload.size()) == "ready";
}

struct StepFailure {
  std::string step;
  std::string error;
};

class Pipeline {
 public:
  explicit Pipeline(const PipelineConfig& config) : config_(config) {}

  PipelineResult run();

 private:
  void log(std::string step, std::string outcome, ordered_json detail = ordered_json::object()) {
    result_.transcript.push_back({std::move(step), machine_->now(), std::move(outcome),
                                  std::move(detail)});
  }
  template <typename F>
  void in_step(const std::string& step, F&& body) {
    try {
      body();
    } catch (const Error& e) {
      throw StepFailure{step, e.what()};
    }
  }

  image::RealmImage fetch_image();
  GranuleId allocate();
  void setup_machine();
  void boot(const image::RealmImage& image);
  void provision();
  void serve();
  void terminate(const std::string& reason);
  void reclaim();
  ExitReason enter();
  void hostile_reads();
  void collect_outputs();
  void finish();

  const PipelineConfig& config_;
  PipelineResult result_;
  std::shared_ptr<Rmm> machine_;
  std::unique_ptr<provider::Provider> provider_;
  std::unique_ptr<transport::TcpProviderServer> server_;
  std::shared_ptr<transport::Link> link_;
  exchange::Region region_;
  GranuleId next_free_ = 0;
  std::vector<GranuleId> image_granules_;
  std::vector<GranuleId> delegated_;
  std::optional<RealmId> realm_;
  bool destroyed_ = false;
  RealmRuntime* runtime_ = nullptr;

  // NormalVm scenario state.
  std::unique_ptr<RealmRuntime> vm_guest_;
  uint64_t vm_inferences_ = 0;
  std::optional<ExitReason> vm_exit_;
  bool vm_booted_ = false;
};

image::RealmImage Pipeline::fetch_image() {
  PublicKey verifier = fixtures::verifier_key().public_key();
  if (config_.image_bundle) return image::verify_bundle(*config_.image_bundle, verifier);
  if (config_.image_path) return image::fetch_realm_image(*config_.image_path, verifier);
  return image::verify_bundle(
      fixtures::realm_image(config_.image_size_bytes, config_.update_every).encode(), verifier);
}

GranuleId Pipeline::allocate() {
  const GranuleSpace& mem = machine_->memory();
  while (next_free_ < mem.size() && mem.granule(next_free_).state != GranuleState::kNormalWorld) {
    ++next_free_;
  }
  if (next_free_ >= mem.size()) throw Error(ErrorCode::kBounds, "out of normal-world granules");
  return next_free_++;
}

void Pipeline::setup_machine() {
  MachineConfig mc = fixtures::machine(config_.profile);
  mc.platform.lifecycle = config_.lifecycle;
  machine_ = std::make_shared<Rmm>(mc);
  result_.machine = machine_;
  result_.normal_granules_before = machine_->memory().count(GranuleState::kNormalWorld);
}

void Pipeline::boot(const image::RealmImage& image) {
  CostLedger& ledger = machine_->ledger();
  ledger.set_phase(Phase::kBoot);
  std::vector<GranuleId> slots;
  for (size_t i = 0; i < config_.exchange_slots; ++i) slots.push_back(allocate());
  region_ = exchange::Region(slots, fixtures::kFeatures);
  GranuleId mailbox = allocate();
  for (size_t i = 0; i < image.segments.size(); ++i) image_granules_.push_back(allocate());
  uint64_t loaded = image.segments.size() * kGranuleSize;
  uint64_t unbacked = image.metadata.image_size_bytes > loaded
                          ? image.metadata.image_size_bytes - loaded : 0;

  if (config_.scenario == Scenario::kNormalVm) {
    ledger.advance_tick();
    ledger.record(EventType::kBootBaseNormal, World::kNormal);
    for (size_t i = 0; i < image.segments.size(); ++i) {
      machine_->memory().write(World::kNormal, image_granules_[i], 0, image.segments[i].content);
    }
    vm_guest_ = RealmRuntime::preloaded(provider_->latest(), region_);
    vm_booted_ = true;
    log("2", "vm-started", {{"image_size_bytes", image.metadata.image_size_bytes}});
    return;
  }

  realm_ = machine_->rmi_realm_create(image.params());
  for (GranuleId g : image_granules_) {
    machine_->rmi_granule_delegate(g);
    delegated_.push_back(g);
  }
  for (size_t i = 0; i < image.segments.size(); ++i) {
    machine_->rmi_data_create(*realm_, image_granules_[i], image.segments[i].content,
                              image.segments[i].target_addr);
  }
  // The rest of the image is loaded the same way; only its cost is modeled.
  if (unbacked > 0) ledger.record(EventType::kPopulate, World::kRealm, unbacked);
  machine_->set_mailbox(mailbox);
  uint64_t entropy = DeterministicRng::derive(config_.seed, "realm-entropy").next();
  auto runtime = std::make_unique<RealmRuntime>(link_, region_, entropy);
  runtime_ = runtime.get();
  machine_->attach_guest(*realm_, std::move(runtime));
  machine_->rmi_realm_activate(*realm_);
  log("2", "realm-active",
      {{"realm", realm_->value},
       {"rim", to_hex(machine_->descriptor(*realm_).rim)},
       {"image_size_bytes", image.metadata.image_size_bytes}});
}

ExitReason Pipeline::enter() {
  if (config_.scenario == Scenario::kRealmVm) return machine_->rmi_rec_enter(*realm_);
  CostLedger& ledger = machine_->ledger();
  ledger.advance_tick();
  ledger.record(EventType::kVmEnter, World::kNormal);
  ledger.record(EventType::kVmEnter, World::kNormal);
  vm_exit_.reset();
  NormalVmEnv env(*machine_, image_granules_, vm_inferences_, vm_exit_);
  vm_guest_->step(env);
  return vm_exit_.value_or(ExitReason{});
}

void Pipeline::provision() {
  machine_->ledger().set_phase(Phase::kProvisioning);
  if (config_.scenario == Scenario::kNormalVm) {
    in_step("6", [&] {
      ExitReason exit = enter();
      if (!is_ready(exit.payload)) throw Error(ErrorCode::kProtocol, "VM did not start");
      log("6", "model-ready", {{"version", vm_guest_->model_version()}});
    });
    return;
  }
  in_step("3", [&] {
    enter();
    if (runtime_->stage() != RealmRuntime::Stage::kConnected) {
      throw Error(ErrorCode::kProtocol, "channel not established");
    }
    log("3", "channel-established");
  });
  ExitReason exit;
  in_step("4", [&] {
    enter();
    log("4", "report-sent");
    exit = enter();
    if (exit.kind == ExitKind::kTerminationRequest) {
      std::string payload(exit.payload.begin(), exit.payload.end());
      throw Error(ErrorCode::kProtocol, "provider refused: " + payload.substr(payload.find(':') + 1));
    }
  });
  in_step("5", [&] {
    if (!runtime_->has_model()) throw Error(ErrorCode::kProtocol, "no model received");
    log("5", "model-received", {{"version", runtime_->model_version()}});
    if (config_.publish_update) {
      provider_->publish(fixtures::model(provider_->latest().version + 1, config_.policy));
    }
  });
  in_step("6", [&] {
    if (exit.kind != ExitKind::kHostCall || !is_ready(exit.payload)) {
      throw Error(ErrorCode::kProtocol, "realm did not announce readiness");
    }
    log("6", "model-ready");
  });
}

void Pipeline::hostile_reads() {
  if (!config_.hostile_host_reads || !realm_) return;
  const RealmDescriptor before = machine_->descriptor(*realm_);
  for (GranuleId g : before.granules) {
    ++result_.hostile.attempts;
    try {
      machine_->memory().read(World::kNormal, g, 0, kGranuleSize);
    } catch (const AccessViolation&) {
      ++result_.hostile.violations;
    }
  }
  const RealmDescriptor& after = machine_->descriptor(*realm_);
  if (after.rim != before.rim || after.rem != before.rem || after.state != before.state ||
      after.granules != before.granules) {
    result_.hostile.realm_state_unchanged = false;
  }
}

void Pipeline::collect_outputs() {
  exchange::NormalWorldPort port(machine_->memory());
  for (const exchange::InferenceOutput& out : region_.take_outputs(port)) {
    result_.outputs.push_back(out);
    log("7", "output", {{"request_id", out.request_id}, {"class", out.class_index}});
  }
}

void Pipeline::serve() {
  machine_->ledger().set_phase(Phase::kInference);
  exchange::NormalWorldPort port(machine_->memory());
  std::vector<exchange::InferenceInput> pending = config_.inputs;
  for (size_t i = 0; i < pending.size(); ++i) pending[i].request_id = i + 1;
  size_t next = 0;
  size_t idle_entries = 0;
  RuntimeDiagnostics seen;
  while (next < pending.size() || result_.outputs.size() < pending.size()) {
    size_t before = result_.outputs.size();
    in_step("7", [&] {
      for (size_t k = 0; k < config_.inputs_per_entry && next < pending.size(); ++k) {
        try {
          region_.put_input(port, pending[next]);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kExchangeFull) throw;
          break;
        }
        ++next;
      }
    });
    ExitReason exit;
    in_step("7", [&] {
      exit = enter();
      hostile_reads();
      collect_outputs();
    });
    const RuntimeDiagnostics& d = runtime_ ? runtime_->diagnostics() : vm_guest_->diagnostics();
    if (d.updates_applied > seen.updates_applied) {
      log("8", "updated", {{"version", runtime_->model_version()}});
    } else if (d.up_to_date > seen.up_to_date) {
      log("8", "up-to-date", {{"version", runtime_->model_version()}});
    } else if (d.update_refusals > seen.update_refusals) {
      log("8", "update-refused");
    }
    seen = d;
    if (exit.kind == ExitKind::kTerminationRequest) {
      std::string payload(exit.payload.begin(), exit.payload.end());
      result_.termination_reason = payload.substr(payload.find(':') + 1);
      return;
    }
    idle_entries = result_.outputs.size() == before ? idle_entries + 1 : 0;
    if (idle_entries > 4) throw StepFailure{"7", "StateError: realm stopped answering"};
  }
  result_.termination_reason = "end-of-batch";
}

void Pipeline::terminate(const std::string& reason) {
  machine_->ledger().set_phase(Phase::kTermination);
  if (config_.scenario == Scenario::kNormalVm) {
    CostLedger& ledger = machine_->ledger();
    ledger.advance_tick();
    ledger.record(EventType::kTerminationBaseNormal, World::kNormal);
    for (GranuleId g : image_granules_) {
      machine_->memory().write(World::kNormal, g, 0, Bytes(kGranuleSize, 0));
    }
  }
  reclaim();
  log("terminate", "destroyed", {{"reason", reason}});
}

// Destroy and undelegate whatever exists; runs on success and abort alike.
void Pipeline::reclaim() {
  if (realm_ && !destroyed_) {
    result_.realm = machine_->descriptor(*realm_);
    machine_->rmi_realm_destroy(*realm_);
    destroyed_ = true;
  }
  for (GranuleId g : delegated_) {
    if (machine_->memory().granule(g).state == GranuleState::kDelegatedRealm) {
      machine_->rmi_granule_undelegate(g);
    }
  }
  delegated_.clear();
  exchange::NormalWorldPort port(machine_->memory());
  for (GranuleId g : region_.slots()) port.write(g, 0, Bytes(kGranuleSize, 0));
}

void Pipeline::finish() {
  result_.normal_granules_after = machine_->memory().count(GranuleState::kNormalWorld);
  if (link_) result_.link_log = link_->log();
  if (auto* in_process = dynamic_cast<transport::InProcessLink*>(link_.get())) {
    result_.provider_transcript = in_process->session().transcript();
  }
  link_.reset();
  if (server_) {
    server_->stop();
    auto sessions = server_->transcripts();
    if (!sessions.empty()) result_.provider_transcript = sessions.front();
    server_.reset();
  }
  for (const transport::LinkRecord& r : result_.link_log) {
    if (!r.outbound && r.type == protocol::MessageType::kChallenge && !result_.provisioning_challenge) {
      auto m = protocol::Message::parse(ByteView(r.frame).subspan(4));
      result_.provisioning_challenge = to_array<64>(m.at(2).as_bytes());
    }
    if (r.outbound && r.type == protocol::MessageType::kReport && !result_.provisioning_report) {
      result_.provisioning_report = protocol::Message::parse(ByteView(r.frame).subspan(4)).at(2).as_bytes();
    }
  }
}

PipelineResult Pipeline::run() {
  setup_machine();
  result_.model_weights = fixtures::model(1, config_.policy).weight_encoding();
  try {
    image::RealmImage image;
    in_step("1", [&] {
      image = fetch_image();
      result_.refs = image.refs;
      log("1", "image-verified", {{"expected_rim", to_hex(image.refs.expected_rim)},
                                  {"segments", image.segments.size()}});
    });
    provider::ProviderConfig pc{fixtures::provider_static_seed(), image.refs, config_.seed};
    provider_ = std::make_unique<provider::Provider>(pc, fixtures::model(1, config_.policy));
    if (config_.scenario == Scenario::kRealmVm) {
      in_step("3", [&] {
        if (config_.transport == ProviderTransport::kTcp) {
          server_ = std::make_unique<transport::TcpProviderServer>(*provider_);
          link_ = std::make_shared<transport::TcpLink>(server_->port());
        } else {
          link_ = std::make_shared<transport::InProcessLink>(*provider_);
        }
      });
    }
    in_step("2", [&] { boot(image); });
    provision();
    serve();
    if (runtime_) result_.diagnostics = runtime_->diagnostics();
    if (vm_guest_) result_.diagnostics = vm_guest_->diagnostics();
    std::string reason = *result_.termination_reason;
    in_step("terminate", [&] { terminate(reason); });
    result_.completed = true;
  } catch (const StepFailure& f) {
    if (runtime_) result_.diagnostics = runtime_->diagnostics();
    result_.failed_step = f.step;
    result_.error = f.error;
    machine_->ledger().set_phase(Phase::kTermination);
    reclaim();
    log("abort", "aborted", {{"failed_step", f.step}, {"error", f.error}});
  }
  runtime_ = nullptr;
  finish();
  return std::move(result_);
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config) { return Pipeline(config).run(); }

}  // namespace realmsim
