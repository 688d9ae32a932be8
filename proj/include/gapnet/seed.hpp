#pragma once

#include <cstdint>
#include <string_view>

namespace gapnet {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Deterministic child seed for (root, stage, a, b). Stages hash by name so
/// adding a stage never shifts the seeds of the others.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stage, std::uint64_t a = 0,
                                 std::uint64_t b = 0) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : stage) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    std::uint64_t s = splitmix64(root ^ h);
    s = splitmix64(s ^ a);
    return splitmix64(s ^ (b * 0xD6E8FEB86659FD93ULL));
}

}  // namespace gapnet
