#pragma once

#include "json.hpp"
#include "realmsim/rmm.hpp"

// Scenario scripts: a JSON array of {"op": ..., "args": {...}} objects
// replayed against a machine. Ops: realm_create {personalization?, entry?},
// granule_delegate {granule}, granule_undelegate {granule}, data_create
// {realm, granule, target_addr, content (hex) | fill (byte)},
// realm_activate {realm}, rec_enter {realm}, realm_destroy {realm},
// measurement_extend {realm, index, digest}.
namespace realmsim::script {

// One result object per command: {"op", "ok"} plus "realm" for creates or
// "error" for failures. Malformed scripts throw Error(Config).
nlohmann::ordered_json replay(Rmm& machine, const nlohmann::json& script);

// Final rim/rem/state of every realm, in id order.
nlohmann::ordered_json summarize(const Rmm& machine);

}  // namespace realmsim::script
