#pragma once

#include <cstdint>
#include <string_view>

namespace realmsim {

enum class World { kNormal, kRealm, kSecure, kRoot };

inline constexpr World kAllWorlds[] = {World::kNormal, World::kRealm, World::kSecure,
                                       World::kRoot};

std::string_view world_name(World world);

// Opaque realm identifier; zero is never issued.
struct RealmId {
  uint64_t value = 0;
  auto operator<=>(const RealmId&) const = default;
};

}  // namespace realmsim
