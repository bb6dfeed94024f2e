#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "auxcal/calibrators.hpp"

namespace auxcal {

inline constexpr int kModelFormatVersion = 1;

// JSON envelope: {"format_version", "kind", "k", "params", "selection"}.
// Output is deterministic: the same model always yields the same bytes.
std::string model_to_json(const CalibratorModel& m);
CalibratorModel model_from_json(std::string_view text);

void save_model(const CalibratorModel& m, const std::filesystem::path& path);
CalibratorModel load_model(const std::filesystem::path& path);

}  // namespace auxcal
