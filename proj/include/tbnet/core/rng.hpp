#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tbnet {

/// Independent generator derived from (seed, stream name, index). All
/// randomness in the project flows through named substreams of the run seed.
std::mt19937_64 substream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t hash = 0xcbf29ce484222325ULL);

}  // namespace tbnet
