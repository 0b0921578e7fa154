#pragma once

#include "causalflow/numerics/dense_net.h"

#include <nlohmann/json.hpp>

namespace causalflow::numerics {

inline constexpr int kNetFormatVersion = 1;

/// JSON object: format version, per-layer shape and activation, optional
/// 0/1 masks, and the flat parameter array.
nlohmann::json to_json(const DenseNet& net);
DenseNet net_from_json(const nlohmann::json& j);

}  // namespace causalflow::numerics
