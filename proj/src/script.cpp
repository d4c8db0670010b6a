#include "realmsim/script.hpp"

#include "realmsim/error.hpp"

namespace realmsim::script {

using nlohmann::ordered_json;

namespace {

Bytes content_of(const nlohmann::json& args) {
  if (args.contains("content")) return from_hex(args["content"].get<std::string>());
  return Bytes(kGranuleSize, args.at("fill").get<uint8_t>());
}

ordered_json run(Rmm& m, const std::string& op, const nlohmann::json& args) {
  ordered_json out{{"op", op}, {"ok", true}};
  auto realm = [&args] { return RealmId{args.at("realm").get<uint64_t>()}; };
  if (op == "realm_create") {
    attestation::RealmParams params;
    if (args.contains("personalization")) {
      Bytes p = from_hex(args["personalization"].get<std::string>());
      if (p.size() > params.personalization.size()) {
        throw Error(ErrorCode::kConfig, "personalization longer than 64 bytes");
      }
      std::copy(p.begin(), p.end(), params.personalization.begin());
    }
    if (args.contains("entry")) {
      params.entry_point = {args["entry"].at("granule").get<uint64_t>(),
                            args["entry"].at("offset").get<uint64_t>()};
    }
    out["realm"] = m.rmi_realm_create(params).value;
  } else if (op == "granule_delegate") {
    m.rmi_granule_delegate(args.at("granule").get<GranuleId>());
  } else if (op == "granule_undelegate") {
    m.rmi_granule_undelegate(args.at("granule").get<GranuleId>());
  } else if (op == "data_create") {
    m.rmi_data_create(realm(), args.at("granule").get<GranuleId>(), content_of(args),
                      args.at("target_addr").get<uint64_t>());
  } else if (op == "realm_activate") {
    m.rmi_realm_activate(realm());
  } else if (op == "rec_enter") {
    m.rmi_rec_enter(realm());
  } else if (op == "realm_destroy") {
    m.rmi_realm_destroy(realm());
  } else if (op == "measurement_extend") {
    m.rsi_measurement_extend(World::kRealm, realm(), args.at("index").get<size_t>(),
                             to_array<32>(from_hex(args.at("digest").get<std::string>())));
  } else {
    throw Error(ErrorCode::kConfig, "unknown script op '" + op + "'");
  }
  return out;
}

}  // namespace

ordered_json replay(Rmm& machine, const nlohmann::json& script) {
  if (!script.is_array()) throw Error(ErrorCode::kConfig, "script must be an array");
  ordered_json results = ordered_json::array();
  for (const auto& command : script) {
    std::string op;
    nlohmann::json args;
    try {
      op = command.at("op").get<std::string>();
      args = command.value("args", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kConfig, e.what());
    }
    try {
      results.push_back(run(machine, op, args));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kConfig, op + ": " + e.what());
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kConfig) throw;
      results.push_back({{"op", op}, {"ok", false}, {"error", e.what()}});
    }
  }
  return results;
}

ordered_json summarize(const Rmm& machine) {
  ordered_json out = ordered_json::array();
  for (RealmId id : machine.realms()) {
    const RealmDescriptor& d = machine.descriptor(id);
    ordered_json rem = ordered_json::array();
    for (const Digest& r : d.rem) rem.push_back(to_hex(r));
    out.push_back({{"realm", id.value},
                   {"state", realm_state_name(d.state)},
                   {"rim", to_hex(d.rim)},
                   {"rem", rem}});
  }
  return out;
}

}  // namespace realmsim::script
