#pragma once

#include <json.hpp>

#include "helix/config.hpp"

namespace helix::detail {

using nlohmann::json;

json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const json& doc);

// Full architecture, including n_features and the resolved variant flags.
json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const json& doc);

}  // namespace helix::detail
