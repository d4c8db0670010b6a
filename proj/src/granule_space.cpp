#include "realmsim/granule_space.hpp"

#include <algorithm>

namespace realmsim {

std::string_view granule_state_name(GranuleState state) {
  switch (state) {
    case GranuleState::kNormalWorld: return "NormalWorld";
    case GranuleState::kDelegatedRealm: return "DelegatedRealm";
    case GranuleState::kRealmOwned: return "RealmOwned";
    case GranuleState::kRoot: return "Root";
    case GranuleState::kSecure: return "Secure";
  }
  return "?";
}

bool access_allowed(World actor, GranuleState state, AccessKind /*kind*/) {
  switch (actor) {
    case World::kRoot:
      return true;
    case World::kRealm:
      return state == GranuleState::kNormalWorld || state == GranuleState::kDelegatedRealm ||
             state == GranuleState::kRealmOwned;
    case World::kSecure:
      return state == GranuleState::kNormalWorld || state == GranuleState::kSecure;
    case World::kNormal:
      return state == GranuleState::kNormalWorld;
  }
  return false;
}

AccessViolation::AccessViolation(World actor, GranuleState state, AccessKind kind,
                                 GranuleId granule)
    : Error(ErrorCode::kAccessViolation,
            std::string(world_name(actor)) + " world " +
                (kind == AccessKind::kRead ? "read of " : "write to ") +
                std::string(granule_state_name(state)) + " granule " + std::to_string(granule)),
      actor_(actor),
      state_(state),
      kind_(kind) {}

GranuleSpace::GranuleSpace(GranuleLayout layout) {
  granules_.resize(layout.normal + layout.root + layout.secure);
  for (size_t i = 0; i < granules_.size(); ++i) {
    granules_[i].index = i;
    if (i >= layout.normal + layout.root) {
      granules_[i].state = GranuleState::kSecure;
    } else if (i >= layout.normal) {
      granules_[i].state = GranuleState::kRoot;
    }
  }
}

const Granule& GranuleSpace::granule(GranuleId id) const {
  if (id >= granules_.size()) {
    throw Error(ErrorCode::kNotFound, "granule " + std::to_string(id));
  }
  return granules_[id];
}

Granule& GranuleSpace::mutable_granule(GranuleId id) {
  return const_cast<Granule&>(std::as_const(*this).granule(id));
}

size_t GranuleSpace::count(GranuleState state) const {
  return std::count_if(granules_.begin(), granules_.end(),
                       [state](const Granule& g) { return g.state == state; });
}

AccessDecision GranuleSpace::check_access(World actor, GranuleId id, AccessKind kind) const {
  return access_allowed(actor, granule(id).state, kind) ? AccessDecision::kAllow
                                                        : AccessDecision::kDeny;
}

void GranuleSpace::delegate(GranuleId id) {
  Granule& g = mutable_granule(id);
  if (g.state != GranuleState::kNormalWorld) {
    throw Error(ErrorCode::kLifecycle, "delegate of " + std::string(granule_state_name(g.state)) +
                                           " granule " + std::to_string(id));
  }
  g.state = GranuleState::kDelegatedRealm;
  std::fill(g.contents.begin(), g.contents.end(), 0);
}

void GranuleSpace::undelegate(GranuleId id) {
  Granule& g = mutable_granule(id);
  if (g.state != GranuleState::kDelegatedRealm) {
    throw Error(ErrorCode::kLifecycle, "undelegate of " +
                                           std::string(granule_state_name(g.state)) +
                                           " granule " + std::to_string(id));
  }
  g.state = GranuleState::kNormalWorld;
  std::fill(g.contents.begin(), g.contents.end(), 0);
}

void GranuleSpace::claim(GranuleId id, RealmId realm) {
  Granule& g = mutable_granule(id);
  if (g.state != GranuleState::kDelegatedRealm) {
    throw Error(ErrorCode::kOwnership, "granule " + std::to_string(id) + " is " +
                                           std::string(granule_state_name(g.state)) +
                                           ", not DelegatedRealm");
  }
  g.state = GranuleState::kRealmOwned;
  g.owner = realm;
}

void GranuleSpace::release(GranuleId id) {
  Granule& g = mutable_granule(id);
  if (g.state != GranuleState::kRealmOwned) {
    throw Error(ErrorCode::kOwnership, "release of unowned granule " + std::to_string(id));
  }
  g.state = GranuleState::kDelegatedRealm;
  g.owner = RealmId{};
  std::fill(g.contents.begin(), g.contents.end(), 0);
}

void GranuleSpace::mediate(World actor, const Granule& g, AccessKind kind, size_t offset,
                           size_t length) {
  if (ledger_ != nullptr) ledger_->record(EventType::kMemoryAccess, actor);
  if (!access_allowed(actor, g.state, kind)) throw AccessViolation(actor, g.state, kind, g.index);
  if (offset > kGranuleSize || length > kGranuleSize - offset) {
    throw Error(ErrorCode::kBounds, "range [" + std::to_string(offset) + ", +" +
                                        std::to_string(length) + ") outside granule " +
                                        std::to_string(g.index));
  }
}

Bytes GranuleSpace::read(World actor, GranuleId id, size_t offset, size_t length) {
  const Granule& g = granule(id);
  mediate(actor, g, AccessKind::kRead, offset, length);
  return Bytes(g.contents.begin() + offset, g.contents.begin() + offset + length);
}

void GranuleSpace::write(World actor, GranuleId id, size_t offset, ByteView data) {
  Granule& g = mutable_granule(id);
  mediate(actor, g, AccessKind::kWrite, offset, data.size());
  std::copy(data.begin(), data.end(), g.contents.begin() + offset);
}

}  // namespace realmsim
