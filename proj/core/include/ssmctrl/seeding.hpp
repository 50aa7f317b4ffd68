#pragma once

#include <cstdint>
#include <string_view>

namespace ssmctrl {

// Deterministic child seed for a (stream name, index) pair, so every
// stochastic component draws from its own reproducible stream.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream,
                          std::uint64_t index = 0);

}  // namespace ssmctrl
