#pragma once

#include <json.hpp>

#include "auxcal/net.hpp"

namespace auxcal::detail {

inline constexpr int kNetFormatVersion = 1;

nlohmann::json net_to_json_value(const FeedForwardNet& net);
FeedForwardNet net_from_json_value(const nlohmann::json& j);

nlohmann::json loss_to_json_value(const LossConfig& cfg);
LossConfig loss_from_json_value(const nlohmann::json& j);

// Typed field access that reports the missing key as a ParseError.
const nlohmann::json& require(const nlohmann::json& j, const char* key);

}  // namespace auxcal::detail
