#pragma once

#include <cstdint>
#include <random>

namespace mktphase {

using Engine = std::mt19937_64;

/// SplitMix64 finalizer; used to turn (master, stream, index) into
/// statistically independent engine seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Per-task seed. Depends only on its arguments, so parallel and sequential
/// evaluation draw identical streams.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                    std::uint64_t index = 0) noexcept
{
    return splitmix64(splitmix64(splitmix64(master) ^ stream) + index);
}

inline Engine make_engine(std::uint64_t seed) { return Engine{seed}; }

} // namespace mktphase
