#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace mslide {

/// Deterministic generator keyed by a tuple of integers (seed, fold, task, ...).
inline std::mt19937_64 make_rng(std::initializer_list<std::uint64_t> key) {
    std::vector<std::uint32_t> words;
    for (std::uint64_t k : key) {
        words.push_back(static_cast<std::uint32_t>(k));
        words.push_back(static_cast<std::uint32_t>(k >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return std::mt19937_64(seq);
}

} // namespace mslide
