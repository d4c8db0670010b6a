#include "realmsim/rmm.hpp"

#include <algorithm>

namespace realmsim {

std::string_view realm_state_name(RealmState state) {
  switch (state) {
    case RealmState::kNew: return "New";
    case RealmState::kActive: return "Active";
    case RealmState::kDestroyed: return "Destroyed";
  }
  return "?";
}

namespace {

std::string realm_label(RealmId realm) { return "realm " + std::to_string(realm.value); }

}  // namespace

// Per-entry view handed to the realm's guest. Narrows the Realm-world
// access matrix to this realm's own granules plus normal-world memory.
class Rmm::RealmEnv final : public GuestEnv {
 public:
  RealmEnv(Rmm& rmm, RealmId realm) : rmm_(rmm), realm_(realm) {}

  World world() const override { return World::kRealm; }

  Bytes read(GranuleId granule, size_t offset, size_t length) override {
    check_isolation(granule, AccessKind::kRead);
    return rmm_.memory_.read(World::kRealm, granule, offset, length);
  }

  void write(GranuleId granule, size_t offset, ByteView data) override {
    check_isolation(granule, AccessKind::kWrite);
    rmm_.memory_.write(World::kRealm, granule, offset, data);
  }

  GranuleId image_granule(size_t index) const override {
    const auto& granules = rmm_.descriptor(realm_).granules;
    if (index >= granules.size()) {
      throw Error(ErrorCode::kBounds, "image granule " + std::to_string(index));
    }
    return granules[index];
  }

  uint64_t now() const override { return rmm_.now(); }

  void measurement_extend(size_t index, const Digest& digest) override {
    rmm_.rsi_measurement_extend(World::kRealm, realm_, index, digest);
  }

  attestation::AttestationReport attestation_token(const Challenge& challenge) override {
    return rmm_.rsi_attestation_token(World::kRealm, realm_, challenge);
  }

  void host_call(ByteView payload) override {
    rmm_.rsi_host_call(World::kRealm, realm_, payload);
  }

  void request_termination(std::string_view reason) override {
    std::string payload = "terminate:" + std::string(reason);
    rmm_.rsi_host_call(World::kRealm, realm_, as_bytes(payload));
    rmm_.pending_exit_->kind = ExitKind::kTerminationRequest;
  }

  void charge(EventType event) override { rmm_.ledger_.record(event, World::kRealm); }

  uint64_t inference_count() const override {
    return rmm_.descriptor(realm_).inference_count;
  }

  void count_inference() override { rmm_.live(realm_).inference_count += 1; }

 private:
  void check_isolation(GranuleId granule, AccessKind kind) const {
    const Granule& g = rmm_.memory_.granule(granule);
    bool own = g.state == GranuleState::kRealmOwned && g.owner == realm_;
    if (g.state != GranuleState::kNormalWorld && !own) {
      rmm_.ledger_.record(EventType::kMemoryAccess, World::kRealm);
      throw AccessViolation(World::kRealm, g.state, kind, granule);
    }
  }

  Rmm& rmm_;
  RealmId realm_;
};

Rmm::Rmm(MachineConfig config)
    : config_(std::move(config)), memory_(config_.layout), ledger_(config_.profile) {
  if (config_.layout.root == 0) {
    throw Error(ErrorCode::kConfig, "machine needs a Root granule for the attestation key");
  }
  memory_.attach_ledger(&ledger_);
  hes_granule_ = config_.layout.normal;
  memory_.write(World::kRoot, hes_granule_, 0, config_.platform.hes_seed);
}

Rmm::Rmm(const Rmm& other)
    : config_(other.config_),
      memory_(other.memory_),
      ledger_(other.ledger_),
      realms_(other.realms_),
      mailbox_(other.mailbox_),
      pending_exit_(other.pending_exit_),
      hes_granule_(other.hes_granule_),
      next_realm_(other.next_realm_) {
  memory_.attach_ledger(&ledger_);
  for (const auto& [id, guest] : other.guests_) guests_[id] = guest->clone();
}

Rmm& Rmm::operator=(const Rmm& other) {
  if (this == &other) return *this;
  config_ = other.config_;
  memory_ = other.memory_;
  ledger_ = other.ledger_;
  realms_ = other.realms_;
  mailbox_ = other.mailbox_;
  pending_exit_ = other.pending_exit_;
  hes_granule_ = other.hes_granule_;
  next_realm_ = other.next_realm_;
  memory_.attach_ledger(&ledger_);
  guests_.clear();
  for (const auto& [id, guest] : other.guests_) guests_[id] = guest->clone();
  return *this;
}

void Rmm::require_issuer(World issuer, World expected, std::string_view what) const {
  if (issuer != expected) {
    throw Error(ErrorCode::kInterface, std::string(what) + " issued by " +
                                           std::string(world_name(issuer)) + " world");
  }
}

void Rmm::secure_monitor_hop(std::initializer_list<World> hops) {
  for (World from : hops) ledger_.record(EventType::kWorldSwitch, from);
}

RealmDescriptor& Rmm::live(RealmId realm) {
  auto it = realms_.find(realm);
  if (it == realms_.end()) throw Error(ErrorCode::kNotFound, realm_label(realm));
  return it->second;
}

const RealmDescriptor& Rmm::descriptor(RealmId realm) const {
  auto it = realms_.find(realm);
  if (it == realms_.end()) throw Error(ErrorCode::kNotFound, realm_label(realm));
  return it->second;
}

std::vector<RealmId> Rmm::realms() const {
  std::vector<RealmId> ids;
  for (const auto& [id, _] : realms_) ids.push_back(id);
  return ids;
}

PublicKey Rmm::platform_public_key() const {
  return crypto::SigningKey::from_seed(config_.platform.hes_seed).public_key();
}

crypto::SigningKey Rmm::load_hes_key() {
  Bytes seed = memory_.read(World::kRoot, hes_granule_, 0, 32);
  return crypto::SigningKey::from_seed(to_array<32>(seed));
}

RealmId Rmm::rmi_realm_create(const attestation::RealmParams& params) {
  ledger_.advance_tick();
  secure_monitor_hop({World::kNormal, World::kRoot});
  RealmDescriptor d;
  d.id = RealmId{next_realm_++};
  d.rim = attestation::initial_rim(params);
  d.entry_point = params.entry_point;
  d.personalization = params.personalization;
  d.created_at = ledger_.tick();
  d.history.push_back(RealmState::kNew);
  ledger_.record(EventType::kBootBaseRealm, World::kRealm);
  RealmId id = d.id;
  realms_.emplace(id, std::move(d));
  return id;
}

void Rmm::rmi_granule_delegate(GranuleId granule) {
  ledger_.advance_tick();
  secure_monitor_hop({World::kNormal, World::kRoot});
  memory_.delegate(granule);
}

void Rmm::rmi_granule_undelegate(GranuleId granule) {
  ledger_.advance_tick();
  secure_monitor_hop({World::kNormal, World::kRoot});
  memory_.undelegate(granule);
}

void Rmm::rmi_data_create(RealmId realm, GranuleId granule, ByteView content,
                          uint64_t target_addr) {
  ledger_.advance_tick();
  secure_monitor_hop({World::kNormal, World::kRoot});
  RealmDescriptor& d = live(realm);
  if (d.state != RealmState::kNew) {
    throw Error(ErrorCode::kLifecycle, "populate after activation of " + realm_label(realm));
  }
  if (content.size() != kGranuleSize) {
    throw Error(ErrorCode::kBounds, "populate content must be one granule, got " +
                                        std::to_string(content.size()) + " bytes");
  }
  if (memory_.granule(granule).state != GranuleState::kDelegatedRealm) {
    throw Error(ErrorCode::kOwnership, "granule " + std::to_string(granule) + " is not delegated");
  }
  memory_.claim(granule, realm);
  memory_.write(World::kRealm, granule, 0, content);
  d.granules.push_back(granule);
  d.rim = attestation::extend(d.rim, attestation::MeasurementRecord::of(content, target_addr));
  ledger_.record(EventType::kPopulate, World::kRealm, content.size());
}

void Rmm::rmi_realm_activate(RealmId realm) {
  ledger_.advance_tick();
  secure_monitor_hop({World::kNormal, World::kRoot});
  RealmDescriptor& d = live(realm);
  if (d.state != RealmState::kNew) {
    throw Error(ErrorCode::kLifecycle, "activate of " + std::string(realm_state_name(d.state)) +
                                           " " + realm_label(realm));
  }
  d.state = RealmState::kActive;
  d.history.push_back(RealmState::kActive);
}

ExitReason Rmm::rmi_rec_enter(RealmId realm) {
  ledger_.advance_tick();
  RealmDescriptor& d = live(realm);
  if (d.state != RealmState::kActive) {
    throw Error(ErrorCode::kLifecycle, "enter of " + std::string(realm_state_name(d.state)) +
                                           " " + realm_label(realm));
  }
  // The hypervisor's own VM entry/exit, then Normal -> Root -> Realm on the
  // way in and the reverse on the way out.
  ledger_.record(EventType::kVmEnter, World::kNormal);
  ledger_.record(EventType::kVmEnter, World::kNormal);
  secure_monitor_hop({World::kNormal, World::kRoot, World::kRealm, World::kRoot});

  pending_exit_.reset();
  auto it = guests_.find(realm);
  if (it != guests_.end()) {
    RealmEnv env(*this, realm);
    it->second->step(env);
  }
  ExitReason exit = pending_exit_.value_or(ExitReason{});
  pending_exit_.reset();
  return exit;
}

void Rmm::rmi_realm_destroy(RealmId realm) {
  ledger_.advance_tick();
  secure_monitor_hop({World::kNormal, World::kRoot});
  RealmDescriptor& d = live(realm);
  if (d.state == RealmState::kDestroyed) {
    throw Error(ErrorCode::kLifecycle, "destroy of destroyed " + realm_label(realm));
  }
  for (GranuleId g : d.granules) memory_.release(g);
  d.granules.clear();
  d.state = RealmState::kDestroyed;
  d.history.push_back(RealmState::kDestroyed);
  guests_.erase(realm);
  ledger_.record(EventType::kTerminationBaseRealm, World::kRealm);
}

attestation::AttestationReport Rmm::rsi_attestation_token(World caller, RealmId realm,
                                                          const Challenge& challenge) {
  require_issuer(caller, World::kRealm, "RSI attestation token");
  ledger_.advance_tick();
  RealmDescriptor& d = live(realm);
  if (d.state != RealmState::kActive) {
    throw Error(ErrorCode::kLifecycle, "attestation of inactive " + realm_label(realm));
  }
  // The platform token comes from the root of trust in the Root world.
  secure_monitor_hop({World::kRealm, World::kRoot});
  attestation::PlatformState platform{config_.platform.firmware_measurements,
                                      config_.platform.lifecycle, load_hes_key()};
  return attestation::assemble_report({d.rim, d.rem, d.personalization}, challenge, platform);
}

void Rmm::rsi_measurement_extend(World caller, RealmId realm, size_t index,
                                 const Digest& digest) {
  require_issuer(caller, World::kRealm, "RSI measurement extend");
  ledger_.advance_tick();
  RealmDescriptor& d = live(realm);
  if (d.state != RealmState::kActive) {
    throw Error(ErrorCode::kLifecycle, "measurement extend on inactive " + realm_label(realm));
  }
  if (index >= attestation::kRemSlots) {
    throw Error(ErrorCode::kBounds, "rem index " + std::to_string(index));
  }
  d.rem[index] = attestation::extend(d.rem[index], digest);
}

void Rmm::rsi_host_call(World caller, RealmId realm, ByteView payload) {
  require_issuer(caller, World::kRealm, "RSI host call");
  ledger_.advance_tick();
  RealmDescriptor& d = live(realm);
  if (d.state != RealmState::kActive) {
    throw Error(ErrorCode::kLifecycle, "host call from inactive " + realm_label(realm));
  }
  if (payload.size() > kMaxHostCallPayload) {
    throw Error(ErrorCode::kBounds, "host call payload of " + std::to_string(payload.size()) +
                                        " bytes");
  }
  if (mailbox_) {
    if (memory_.granule(*mailbox_).state != GranuleState::kNormalWorld) {
      throw Error(ErrorCode::kInterface, "mailbox granule is not normal-world memory");
    }
    Bytes message;
    append_le16(message, static_cast<uint16_t>(payload.size()));
    append(message, payload);
    memory_.write(World::kRealm, *mailbox_, 0, message);
  }
  pending_exit_ = ExitReason{ExitKind::kHostCall, Bytes(payload.begin(), payload.end())};
}

void Rmm::attach_guest(RealmId realm, std::unique_ptr<Guest> guest) {
  const RealmDescriptor& d = live(realm);
  if (d.state != RealmState::kNew) {
    throw Error(ErrorCode::kLifecycle, "guest attached after activation of " + realm_label(realm));
  }
  guests_[realm] = std::move(guest);
}

Guest* Rmm::guest(RealmId realm) {
  auto it = guests_.find(realm);
  return it == guests_.end() ? nullptr : it->second.get();
}

RmiResult Rmm::execute(const RmiCommand& command) {
  require_issuer(command.issuer, World::kNormal, "RMI command");
  return std::visit(
      [this](const auto& op) -> RmiResult {
        using T = std::decay_t<decltype(op)>;
        if constexpr (std::is_same_v<T, rmi::RealmCreate>) {
          return rmi_realm_create(op.params);
        } else if constexpr (std::is_same_v<T, rmi::GranuleDelegate>) {
          rmi_granule_delegate(op.granule);
        } else if constexpr (std::is_same_v<T, rmi::GranuleUndelegate>) {
          rmi_granule_undelegate(op.granule);
        } else if constexpr (std::is_same_v<T, rmi::DataCreate>) {
          rmi_data_create(op.realm, op.granule, op.content, op.target_addr);
        } else if constexpr (std::is_same_v<T, rmi::RealmActivate>) {
          rmi_realm_activate(op.realm);
        } else if constexpr (std::is_same_v<T, rmi::RecEnter>) {
          return rmi_rec_enter(op.realm);
        } else if constexpr (std::is_same_v<T, rmi::RealmDestroy>) {
          rmi_realm_destroy(op.realm);
        }
        return std::monostate{};
      },
      command.op);
}

RsiResult Rmm::execute(const RsiCall& call) {
  return std::visit(
      [this, &call](const auto& op) -> RsiResult {
        using T = std::decay_t<decltype(op)>;
        if constexpr (std::is_same_v<T, rsi::AttestationToken>) {
          return rsi_attestation_token(call.issuer, op.realm, op.challenge);
        } else if constexpr (std::is_same_v<T, rsi::MeasurementExtend>) {
          rsi_measurement_extend(call.issuer, op.realm, op.index, op.digest);
        } else if constexpr (std::is_same_v<T, rsi::HostCall>) {
          rsi_host_call(call.issuer, op.realm, op.payload);
        }
        return std::monostate{};
      },
      call.op);
}

}  // namespace realmsim
