// Copyright (c) 2026 rp8 contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace rp8 {

namespace detail {

/// SplitMix64 finalizer. Fixed constants, platform-independent.
inline constexpr uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

} // namespace detail

/// Counter-based deterministic random stream.  A stream is a value: it is
/// identified by (seed, key) and an advancing draw counter.  `derive(k)`
/// folds k into the key and resets the counter, which is how tensors, steps
/// and element indices get their own independent streams.  Identical
/// (seed, key, counter) tuples produce identical draws on every platform,
/// so results cannot depend on scheduling or thread count.
struct RngStream {
    uint64_t seed = 0;
    uint64_t key = 0;
    uint64_t counter = 0;

    static constexpr RngStream root(uint64_t seed) { return RngStream{seed, 0x243f6a8885a308d3ull, 0}; }

    constexpr RngStream derive(uint64_t k) const {
        return RngStream{seed, detail::mix64(key ^ detail::mix64(k)), 0};
    }

    /// Key layout used by the kernels: (tensor id, element index, step).
    static constexpr RngStream for_element(uint64_t seed, uint64_t tensor_id,
                                           uint64_t element_index, uint64_t step) {
        return root(seed).derive(tensor_id).derive(step).derive(element_index);
    }

    constexpr uint64_t next_u64() {
        uint64_t v = detail::mix64(seed ^ detail::mix64(key ^ detail::mix64(counter)));
        ++counter;
        return v;
    }

    /// Uniform on [0,1) with 53 bits of entropy.
    constexpr double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }
};

} // namespace rp8
