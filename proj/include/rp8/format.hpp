// Copyright (c) 2026 rp8 contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rp8 {

/// Descriptor of a small binary floating-point format:
/// [1 sign | exp_bits exponent | man_bits mantissa], most-significant bit
/// first, with a configurable exponent bias.  When `special_exponent_reserved`
/// is set, the all-ones exponent field encodes Inf (mantissa 0) and NaN
/// (mantissa != 0), IEEE style.  Subnormals are always supported:
/// exponent field 0 decodes as s * 2^(1-bias) * (m / 2^man_bits).
struct FloatFormat {
    int exp_bits = 8;
    int man_bits = 23;
    int bias = 127;
    bool special_exponent_reserved = true;

    constexpr FloatFormat() = default;
    constexpr FloatFormat(int e, int m, int b, bool reserved = true)
        : exp_bits(e), man_bits(m), bias(b), special_exponent_reserved(reserved) {}

    constexpr int total_bits() const { return 1 + exp_bits + man_bits; }

    /// Largest exponent-field value that encodes a normal number.
    constexpr uint32_t max_exp_field() const {
        return (1u << exp_bits) - 1u - (special_exponent_reserved ? 1u : 0u);
    }
    /// Unbiased exponent of the largest normal binade.
    constexpr int max_exp() const { return static_cast<int>(max_exp_field()) - bias; }
    /// Unbiased exponent of the smallest normal binade (also the subnormal binade).
    constexpr int min_exp() const { return 1 - bias; }

    constexpr uint32_t sign_mask() const { return 1u << (exp_bits + man_bits); }
    constexpr uint32_t man_mask() const { return (1u << man_bits) - 1u; }
    constexpr uint32_t magnitude_mask() const { return sign_mask() - 1u; }
    /// Magnitude bits of the largest finite value.
    constexpr uint32_t max_normal_bits() const {
        return (max_exp_field() << man_bits) | man_mask();
    }

    constexpr double max_normal_value() const {
        // 2^max_exp * (2 - 2^-man_bits)
        double v = 1.0;
        for (int i = 0; i < man_bits; ++i) v *= 0.5;
        v = 2.0 - v;
        int e = max_exp();
        while (e > 0) { v *= 2.0; --e; }
        while (e < 0) { v *= 0.5; ++e; }
        return v;
    }

    constexpr bool operator==(const FloatFormat&) const = default;

    /// Throws std::invalid_argument when the descriptor is out of the
    /// supported envelope (bit widths, or an exponent range a binary64
    /// cannot carry exactly).
    void validate() const {
        if (exp_bits < 2) throw std::invalid_argument("FloatFormat: exp_bits must be >= 2");
        if (man_bits < 1) throw std::invalid_argument("FloatFormat: man_bits must be >= 1");
        if (total_bits() > 32) throw std::invalid_argument("FloatFormat: total bits must be <= 32");
        if (man_bits > 30) throw std::invalid_argument("FloatFormat: man_bits must be <= 30");
        // Wide (binary64) arithmetic must hold every value exactly.
        if (max_exp() > 960 || min_exp() - man_bits < -960)
            throw std::invalid_argument("FloatFormat: exponent range exceeds wide-precision envelope");
        if (man_bits + 1 > 52)
            throw std::invalid_argument("FloatFormat: significand exceeds wide-precision envelope");
    }

    // The paper's formats. Bias is 2^(exp_bits-1)-1 throughout.
    static constexpr FloatFormat fp8() { return {5, 2, 15, true}; }
    static constexpr FloatFormat fp16() { return {6, 9, 31, true}; }
    static constexpr FloatFormat fp32() { return {8, 23, 127, true}; }

    std::string describe() const {
        return "(1," + std::to_string(exp_bits) + "," + std::to_string(man_bits) +
               ") bias " + std::to_string(bias);
    }
};

enum class RoundingMode {
    NearestEven,
    Stochastic,
};

inline const char* to_string(RoundingMode m) {
    return m == RoundingMode::NearestEven ? "nearest" : "stochastic";
}

/// A bit pattern paired with its format.
struct Encoded {
    uint32_t bits = 0;
    FloatFormat fmt;
};

} // namespace rp8
