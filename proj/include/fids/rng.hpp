#pragma once

#include <cstdint>
#include <random>

namespace fids {

// Counter-style stream: every (seed, a, b) triple gets its own generator, so
// results never depend on the order in which work items are scheduled.
inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a),    static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b),    static_cast<std::uint32_t>(b >> 32)};
    return std::mt19937_64(seq);
}

// uniform on [0,1)
inline double uniform01(std::mt19937_64& g)
{
    return std::generate_canonical<double, 53>(g);
}

} // namespace fids
