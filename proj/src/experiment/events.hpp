#pragma once

#include <nlohmann/json.hpp>

#include "ideoscale/experiment.hpp"

namespace ideo::detail {

// Applies one event to a session. The live service and replay share this so
// in-memory state and replayed state cannot drift apart.
void apply_event(Session& session, const nlohmann::json& event);

}  // namespace ideo::detail
