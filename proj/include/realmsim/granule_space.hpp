#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "realmsim/bytes.hpp"
#include "realmsim/cost_model.hpp"
#include "realmsim/error.hpp"
#include "realmsim/world.hpp"

namespace realmsim {

inline constexpr size_t kGranuleSize = 4096;

using GranuleId = uint64_t;

enum class GranuleState { kNormalWorld, kDelegatedRealm, kRealmOwned, kRoot, kSecure };

inline constexpr GranuleState kAllGranuleStates[] = {
    GranuleState::kNormalWorld, GranuleState::kDelegatedRealm, GranuleState::kRealmOwned,
    GranuleState::kRoot, GranuleState::kSecure};

enum class AccessKind { kRead, kWrite };
enum class AccessDecision { kAllow, kDeny };

std::string_view granule_state_name(GranuleState state);

struct Granule {
  GranuleId index = 0;
  GranuleState state = GranuleState::kNormalWorld;
  RealmId owner;  // meaningful only for kRealmOwned
  Bytes contents = Bytes(kGranuleSize, 0);
};

// The inter-world access matrix. Per-realm isolation is not expressed here;
// the RMM narrows Realm-world access to a realm's own granules.
bool access_allowed(World actor, GranuleState state, AccessKind kind);

class AccessViolation : public Error {
 public:
  AccessViolation(World actor, GranuleState state, AccessKind kind, GranuleId granule);

  World actor() const { return actor_; }
  GranuleState state() const { return state_; }
  AccessKind kind() const { return kind_; }

 private:
  World actor_;
  GranuleState state_;
  AccessKind kind_;
};

struct GranuleLayout {
  size_t normal = 64;
  size_t root = 1;
  size_t secure = 1;
};

// Simulated physical memory. Normal-world granules occupy ids [0, normal),
// followed by Root and then Secure granules.
class GranuleSpace {
 public:
  explicit GranuleSpace(GranuleLayout layout = {});

  size_t size() const { return granules_.size(); }
  const Granule& granule(GranuleId id) const;
  size_t count(GranuleState state) const;

  AccessDecision check_access(World actor, GranuleId id, AccessKind kind) const;

  // Hypervisor-initiated transitions, scrubbing contents on entry.
  void delegate(GranuleId id);
  void undelegate(GranuleId id);

  // RMM-internal transitions between delegated and owned.
  void claim(GranuleId id, RealmId realm);
  void release(GranuleId id);

  // Mediated memory access; each call is charged as one memory access.
  Bytes read(World actor, GranuleId id, size_t offset, size_t length);
  void write(World actor, GranuleId id, size_t offset, ByteView data);

  void attach_ledger(CostLedger* ledger) { ledger_ = ledger; }

 private:
  Granule& mutable_granule(GranuleId id);
  void mediate(World actor, const Granule& g, AccessKind kind, size_t offset, size_t length);

  std::vector<Granule> granules_;
  CostLedger* ledger_ = nullptr;
};

}  // namespace realmsim
