// Copyright (c) 2026 rp8 contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "rp8/format.hpp"
#include "rp8/rng.hpp"

namespace rp8 {

using uint128 = unsigned __int128;
using int128 = __int128;

/// Outcome flags of a single rounding. `inexact` means the delivered value
/// differs from the exact input; `saturated` means the exact input exceeded
/// the largest finite magnitude and was clamped to max-normal.
struct RoundFlags {
    bool inexact = false;
    bool saturated = false;
};

namespace detail {

inline int bit_width_u128(uint128 v) {
    uint64_t hi = static_cast<uint64_t>(v >> 64);
    if (hi != 0) return 64 + std::bit_width(hi);
    return std::bit_width(static_cast<uint64_t>(v));
}

} // namespace detail

inline uint32_t exp_field(uint32_t bits, const FloatFormat& f) {
    return (bits >> f.man_bits) & ((1u << f.exp_bits) - 1u);
}
inline uint32_t man_field(uint32_t bits, const FloatFormat& f) {
    return bits & f.man_mask();
}
inline bool sign_of(uint32_t bits, const FloatFormat& f) {
    return (bits & f.sign_mask()) != 0;
}
inline bool is_nan(uint32_t bits, const FloatFormat& f) {
    return f.special_exponent_reserved && exp_field(bits, f) == (1u << f.exp_bits) - 1u &&
           man_field(bits, f) != 0;
}
inline bool is_inf(uint32_t bits, const FloatFormat& f) {
    return f.special_exponent_reserved && exp_field(bits, f) == (1u << f.exp_bits) - 1u &&
           man_field(bits, f) == 0;
}
inline bool is_zero(uint32_t bits, const FloatFormat& f) {
    return (bits & f.magnitude_mask()) == 0;
}

/// Exact unpacked finite value: (-1)^negative * sig * 2^exp2, sig integral.
struct Unpacked {
    bool negative = false;
    uint128 sig = 0;
    int exp2 = 0;
};

inline Unpacked unpack(uint32_t bits, const FloatFormat& f) {
    Unpacked u;
    u.negative = sign_of(bits, f);
    uint32_t e = exp_field(bits, f);
    uint32_t m = man_field(bits, f);
    if (e == 0) {
        u.sig = m;
        u.exp2 = f.min_exp() - f.man_bits;
    } else {
        u.sig = m | (1u << f.man_bits);
        u.exp2 = static_cast<int>(e) - f.bias - f.man_bits;
    }
    return u;
}

/// Exact wide-precision value of a finite or infinite pattern.
/// NaN patterns are a domain error ("not a number").
inline double decode(uint32_t bits, const FloatFormat& f) {
    if (is_nan(bits, f)) throw std::domain_error("decode: not a number");
    bool neg = sign_of(bits, f);
    if (is_inf(bits, f)) return neg ? -HUGE_VAL : HUGE_VAL;
    Unpacked u = unpack(bits, f);
    double v = std::ldexp(static_cast<double>(static_cast<uint64_t>(u.sig)), u.exp2);
    return neg ? -v : v;
}

inline double decode(const Encoded& v) { return decode(v.bits, v.fmt); }

namespace detail {

// Alignment wider than this collapses the remaining tail into a sticky bit.
// Every FP8/FP16 pairing stays exact (worst-case span is well under 80 bits);
// only FP32-mode emulation can hit the cap, where the sticky keeps
// nearest-even rounding exact and perturbs stochastic probabilities by less
// than the 2^-64 resolution of a draw.
inline constexpr int kMaxAlignShift = 90;

/// Round the exact value (-1)^negative * sig * 2^exp2 into `f` under `mode`.
/// This is the single rounding step shared by encode, exact_add and
/// exact_mul; rounding happens exactly once per operation.
inline uint32_t round_unpacked(bool negative, uint128 sig, int exp2, const FloatFormat& f,
                               RoundingMode mode, RngStream* rng, RoundFlags* flags) {
    const uint32_t sign_bits = negative ? f.sign_mask() : 0u;
    if (sig == 0) return sign_bits;

    const int man = f.man_bits;
    const int top = bit_width_u128(sig) - 1;
    const int value_exp = exp2 + top;
    const int emin = f.min_exp();
    const int emax = f.max_exp();

    auto saturate = [&]() {
        if (flags) {
            flags->saturated = true;
            flags->inexact = true;
        }
        return sign_bits | f.max_normal_bits();
    };

    if (value_exp > emax) return saturate();

    // Grid exponent: spacing of representable values at this magnitude.
    const bool subnormal = value_exp < emin;
    const int grid_exp = (subnormal ? emin : value_exp) - man;

    const int shift = grid_exp - exp2;
    uint128 n;
    if (shift <= 0) {
        // Value already on the grid (finer grid than sig's unit).
        n = sig << (-shift);
    } else {
        uint128 rem;
        if (shift >= 128) {
            n = 0;
            rem = sig;
        } else {
            n = sig >> shift;
            rem = sig & ((uint128(1) << shift) - 1);
        }
        bool round_up = false;
        if (rem != 0) {
            if (flags) flags->inexact = true;
            if (mode == RoundingMode::NearestEven) {
                if (shift < 128) {
                    const uint128 half = uint128(1) << (shift - 1);
                    round_up = rem > half || (rem == half && (n & 1));
                }
                // shift >= 128: rem < 2^(shift-1), always rounds down
            } else {
                // Stochastic: round up with probability rem / 2^shift,
                // resolved against a 64-bit draw.
                const uint64_t u = rng->next_u64();
                uint128 threshold;
                if (shift <= 64) {
                    threshold = rem << (64 - shift);
                } else if (shift - 64 < 128) {
                    threshold = rem >> (shift - 64);
                } else {
                    threshold = 0;
                }
                round_up = uint128(u) < threshold;
            }
        }
        if (round_up) ++n;
    }

    if (n == 0) return sign_bits;

    // Linear pattern index: subnormal->normal promotion and binade carries
    // fold in automatically because patterns are value-ordered.
    const int binade = subnormal ? emin : value_exp;
    const uint128 base = uint128(binade + f.bias - 1) << man;
    const uint128 mag = subnormal ? n : base + n;
    if (mag > f.max_normal_bits()) return saturate();
    return sign_bits | static_cast<uint32_t>(mag);
}

/// Exact decomposition of a finite double; |x| = sig * 2^exp2.
inline void split_double(double a, uint64_t& sig, int& exp2) {
    int k = 0;
    double fr = std::frexp(a, &k); // |fr| in [0.5, 1)
    sig = static_cast<uint64_t>(std::ldexp(std::fabs(fr), 53));
    exp2 = k - 53;
}

} // namespace detail

/// Round a wide-precision real into the format. Finite inputs beyond the
/// largest representable magnitude saturate to max-normal; +-Inf maps to the
/// Inf pattern when one exists (and saturates otherwise). Signed zero is
/// preserved. NaN needs a reserved special exponent, else it is
/// unrepresentable.
inline uint32_t encode_bits(double x, const FloatFormat& f, RoundingMode mode,
                            RngStream* rng = nullptr, RoundFlags* flags = nullptr) {
    if (std::isnan(x)) {
        if (!f.special_exponent_reserved) throw std::domain_error("encode: unrepresentable");
        return (((1u << f.exp_bits) - 1u) << f.man_bits) | 1u;
    }
    const bool neg = std::signbit(x);
    if (std::isinf(x)) {
        if (f.special_exponent_reserved)
            return (neg ? f.sign_mask() : 0u) | (((1u << f.exp_bits) - 1u) << f.man_bits);
        if (flags) {
            flags->saturated = true;
            flags->inexact = true;
        }
        return (neg ? f.sign_mask() : 0u) | f.max_normal_bits();
    }
    if (x == 0.0) return neg ? f.sign_mask() : 0u;
    if (mode == RoundingMode::Stochastic && rng == nullptr)
        throw std::invalid_argument("encode: stochastic rounding requires an RngStream");

    uint64_t sig;
    int exp2;
    detail::split_double(x, sig, exp2);
    return detail::round_unpacked(neg, sig, exp2, f, mode, rng, flags);
}

inline Encoded encode(double x, const FloatFormat& f, RoundingMode mode = RoundingMode::NearestEven,
                      RngStream* rng = nullptr, RoundFlags* flags = nullptr) {
    return Encoded{encode_bits(x, f, mode, rng, flags), f};
}

namespace detail {

/// Core of exact_add on unpacked operands: align significands exactly
/// (up to kMaxAlignShift, beyond which the tail becomes a sticky bit),
/// add as signed 128-bit integers, round once.
inline uint32_t add_unpacked(const Unpacked& a, const Unpacked& b, const FloatFormat& out,
                             RoundingMode mode, RngStream* rng, RoundFlags* flags) {
    if (a.sig == 0 && b.sig == 0)
        return round_unpacked(a.negative && b.negative, 0, 0, out, mode, rng, flags);
    if (a.sig == 0) return round_unpacked(b.negative, b.sig, b.exp2, out, mode, rng, flags);
    if (b.sig == 0) return round_unpacked(a.negative, a.sig, a.exp2, out, mode, rng, flags);

    const Unpacked& hi = (a.exp2 >= b.exp2) ? a : b;
    const Unpacked& lo = (a.exp2 >= b.exp2) ? b : a;
    int delta = hi.exp2 - lo.exp2;
    int base_exp = lo.exp2;
    uint128 hi_sig = hi.sig;
    uint128 lo_sig = lo.sig;
    if (delta > kMaxAlignShift) {
        // Tail beyond the cap collapses into a sticky LSB.
        base_exp = hi.exp2 - kMaxAlignShift;
        delta = kMaxAlignShift;
        lo_sig = 1;
    }
    int128 v = static_cast<int128>(hi_sig << delta);
    if (hi.negative) v = -v;
    v += lo.negative ? -static_cast<int128>(lo_sig) : static_cast<int128>(lo_sig);
    // Exact cancellation yields +0.
    if (hi.negative != lo.negative && v == 0)
        return round_unpacked(false, 0, 0, out, mode, rng, flags);
    const bool negative = v < 0;
    const uint128 mag = negative ? static_cast<uint128>(-v) : static_cast<uint128>(v);
    return round_unpacked(negative, mag, base_exp, out, mode, rng, flags);
}

inline void require_finite(const Encoded& v, const char* who) {
    if (!v.fmt.special_exponent_reserved) return;
    if (is_nan(v.bits, v.fmt) || is_inf(v.bits, v.fmt))
        throw std::domain_error(std::string(who) + ": operands must be finite");
}

} // namespace detail

/// Single-rounding addition: the mathematically exact sum of the two finite
/// operands is rounded once into `out`. Never forms a pre-rounded
/// intermediate, so the stochastic residual probability is well defined.
inline Encoded exact_add(const Encoded& a, const Encoded& b, const FloatFormat& out,
                         RoundingMode mode = RoundingMode::NearestEven, RngStream* rng = nullptr,
                         RoundFlags* flags = nullptr) {
    detail::require_finite(a, "exact_add");
    detail::require_finite(b, "exact_add");
    if (mode == RoundingMode::Stochastic && rng == nullptr)
        throw std::invalid_argument("exact_add: stochastic rounding requires an RngStream");
    Unpacked ua = unpack(a.bits, a.fmt);
    Unpacked ub = unpack(b.bits, b.fmt);
    return Encoded{detail::add_unpacked(ua, ub, out, mode, rng, flags), out};
}

/// Single-rounding multiplication. FP8 x FP8 into FP16 is exact by
/// construction (significand product fits, exponent range fits); mixed-width
/// inputs round the exact product to nearest-even.
inline Encoded exact_mul(const Encoded& a, const Encoded& b, const FloatFormat& out,
                         RoundFlags* flags = nullptr) {
    detail::require_finite(a, "exact_mul");
    detail::require_finite(b, "exact_mul");
    Unpacked ua = unpack(a.bits, a.fmt);
    Unpacked ub = unpack(b.bits, b.fmt);
    const bool negative = ua.negative != ub.negative;
    const uint128 sig = ua.sig * ub.sig;
    uint32_t bits = detail::round_unpacked(negative, sig, ua.exp2 + ub.exp2, out,
                                           RoundingMode::NearestEven, nullptr, flags);
    return Encoded{bits, out};
}

} // namespace rp8
