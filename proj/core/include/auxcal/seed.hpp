#pragma once

#include <cstdint>
#include <string_view>

namespace auxcal {

// Derives an independent sub-seed from a master seed and a component name.
// Stable across platforms and runs (FNV-1a over the name, splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t master, std::string_view component);

}  // namespace auxcal
