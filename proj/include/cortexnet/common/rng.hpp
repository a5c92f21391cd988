#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace cortexnet {

using Rng = std::mt19937_64;

/// Builds an independent generator for the stream identified by `ids`
/// (e.g. {seed, subject, sample}). Mixing goes through std::seed_seq so the
/// same ids always give the same stream.
inline Rng make_rng(std::initializer_list<std::uint64_t> ids) {
    std::vector<std::uint32_t> words;
    words.reserve(ids.size() * 2 + 1);
    words.push_back(0x636f7274u);  // "cort"
    for (std::uint64_t id : ids) {
        words.push_back(static_cast<std::uint32_t>(id & 0xffffffffu));
        words.push_back(static_cast<std::uint32_t>(id >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double normal01(Rng& rng) {
    return std::normal_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace cortexnet
