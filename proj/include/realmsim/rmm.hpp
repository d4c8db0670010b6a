#pragma once

#include <initializer_list>
#include <map>
#include <memory>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include "realmsim/attestation.hpp"
#include "realmsim/cost_model.hpp"
#include "realmsim/granule_space.hpp"

namespace realmsim {

enum class RealmState { kNew, kActive, kDestroyed };
std::string_view realm_state_name(RealmState state);

struct RealmDescriptor {
  RealmId id;
  RealmState state = RealmState::kNew;
  Digest rim{};
  std::array<Digest, attestation::kRemSlots> rem{};
  std::vector<GranuleId> granules;  // in populate order
  attestation::EntryPoint entry_point;
  Personalization personalization{};
  uint64_t inference_count = 0;
  uint64_t created_at = 0;
  std::vector<RealmState> history;  // every state the realm has been in
};

enum class ExitKind { kHostCall, kYield, kTerminationRequest };

struct ExitReason {
  ExitKind kind = ExitKind::kYield;
  Bytes payload;
};

inline constexpr size_t kMaxHostCallPayload = 256;

// Services visible to code running inside a VM. The RMM provides one per
// realm entry; a normal-world VM host provides a reduced one.
class GuestEnv {
 public:
  virtual ~GuestEnv() = default;

  virtual World world() const = 0;
  virtual Bytes read(GranuleId granule, size_t offset, size_t length) = 0;
  virtual void write(GranuleId granule, size_t offset, ByteView data) = 0;
  // Physical id of the index-th granule loaded from the VM image.
  virtual GranuleId image_granule(size_t index) const = 0;
  virtual uint64_t now() const = 0;

  virtual void measurement_extend(size_t index, const Digest& digest) = 0;
  virtual attestation::AttestationReport attestation_token(const Challenge& challenge) = 0;
  virtual void host_call(ByteView payload) = 0;
  // Host call asking the hypervisor to tear the VM down.
  virtual void request_termination(std::string_view reason) = 0;

  virtual void charge(EventType event) = 0;
  virtual uint64_t inference_count() const = 0;
  virtual void count_inference() = 0;
};

// A program running inside a VM; `step` runs until the guest yields.
class Guest {
 public:
  virtual ~Guest() = default;
  virtual void step(GuestEnv& env) = 0;
  virtual std::unique_ptr<Guest> clone() const = 0;
};

struct PlatformConfig {
  std::vector<Digest> firmware_measurements;
  attestation::LifecycleState lifecycle = attestation::LifecycleState::kSecured;
  crypto::Seed hes_seed{};
};

struct MachineConfig {
  GranuleLayout layout;
  CostProfile profile;
  PlatformConfig platform;
};

// Commands in tagged form, each carrying the world that issued it.
namespace rmi {
struct RealmCreate { attestation::RealmParams params; };
struct GranuleDelegate { GranuleId granule = 0; };
struct GranuleUndelegate { GranuleId granule = 0; };
struct DataCreate { RealmId realm; GranuleId granule = 0; Bytes content; uint64_t target_addr = 0; };
struct RealmActivate { RealmId realm; };
struct RecEnter { RealmId realm; };
struct RealmDestroy { RealmId realm; };
using Op = std::variant<RealmCreate, GranuleDelegate, GranuleUndelegate, DataCreate,
                        RealmActivate, RecEnter, RealmDestroy>;
}  // namespace rmi

namespace rsi {
struct AttestationToken { RealmId realm; Challenge challenge{}; };
struct MeasurementExtend { RealmId realm; size_t index = 0; Digest digest{}; };
struct HostCall { RealmId realm; Bytes payload; };
using Op = std::variant<AttestationToken, MeasurementExtend, HostCall>;
}  // namespace rsi

struct RmiCommand {
  World issuer = World::kNormal;
  rmi::Op op;
};

struct RsiCall {
  World issuer = World::kRealm;
  rsi::Op op;
};

using RmiResult = std::variant<std::monostate, RealmId, ExitReason>;
using RsiResult = std::variant<std::monostate, attestation::AttestationReport>;

// The Realm Management Monitor together with the machine it manages. Every
// command advances the simulated clock by one tick and executes atomically;
// a rejected command leaves realm and granule state untouched.
class Rmm {
 public:
  explicit Rmm(MachineConfig config = {});
  Rmm(const Rmm& other);
  Rmm& operator=(const Rmm& other);
  Rmm(Rmm&&) = delete;
  Rmm& operator=(Rmm&&) = delete;

  RmiResult execute(const RmiCommand& command);
  RsiResult execute(const RsiCall& call);

  // Hypervisor-facing RMI.
  RealmId rmi_realm_create(const attestation::RealmParams& params);
  void rmi_granule_delegate(GranuleId granule);
  void rmi_granule_undelegate(GranuleId granule);
  void rmi_data_create(RealmId realm, GranuleId granule, ByteView content, uint64_t target_addr);
  void rmi_realm_activate(RealmId realm);
  ExitReason rmi_rec_enter(RealmId realm);
  void rmi_realm_destroy(RealmId realm);

  // Realm-facing RSI; `caller` must be the Realm world.
  attestation::AttestationReport rsi_attestation_token(World caller, RealmId realm,
                                                       const Challenge& challenge);
  void rsi_measurement_extend(World caller, RealmId realm, size_t index, const Digest& digest);
  void rsi_host_call(World caller, RealmId realm, ByteView payload);

  // Loads the program a realm runs; only while the realm is New.
  void attach_guest(RealmId realm, std::unique_ptr<Guest> guest);
  Guest* guest(RealmId realm);

  // Normal-world granule receiving host-call payloads (le16 length || bytes).
  void set_mailbox(std::optional<GranuleId> granule) { mailbox_ = granule; }

  const RealmDescriptor& descriptor(RealmId realm) const;
  std::vector<RealmId> realms() const;

  GranuleSpace& memory() { return memory_; }
  const GranuleSpace& memory() const { return memory_; }
  CostLedger& ledger() { return ledger_; }
  const CostLedger& ledger() const { return ledger_; }
  uint64_t now() const { return ledger_.tick(); }

  const PlatformConfig& platform() const { return config_.platform; }
  PublicKey platform_public_key() const;
  GranuleId hes_granule() const { return hes_granule_; }

 private:
  class RealmEnv;

  RealmDescriptor& live(RealmId realm);
  void require_issuer(World issuer, World expected, std::string_view what) const;
  // One world switch per hop, attributed to the world being left.
  void secure_monitor_hop(std::initializer_list<World> hops);
  crypto::SigningKey load_hes_key();

  MachineConfig config_;
  GranuleSpace memory_;
  CostLedger ledger_;
  std::map<RealmId, RealmDescriptor> realms_;
  std::map<RealmId, std::unique_ptr<Guest>> guests_;
  std::optional<GranuleId> mailbox_;
  std::optional<ExitReason> pending_exit_;
  GranuleId hes_granule_ = 0;
  uint64_t next_realm_ = 1;
};

}  // namespace realmsim
