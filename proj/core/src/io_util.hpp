#pragma once

#include <filesystem>
#include <string>

namespace auxcal::detail {

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& contents);

// Shortest decimal form that round-trips to the same double.
std::string format_double(double value);

}  // namespace auxcal::detail
