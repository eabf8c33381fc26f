// Copyright (c) 2026 rp8 contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "rp8/format.hpp"
#include "rp8/minifloat.hpp"

namespace rp8 {

/// Chunk length for hierarchical accumulation. CL = 1 reproduces flat
/// (unchunked) accumulation.
struct ChunkSpec {
    size_t cl = 64;

    explicit constexpr ChunkSpec(size_t cl_ = 64) : cl(cl_) {}
    void validate() const {
        if (cl < 1) throw std::invalid_argument("ChunkSpec: CL must be >= 1");
    }
};

/// Precision assignment for the GEMM/dot path: multiply operands in fp_mult,
/// accumulate in fp_acc under acc_rounding, chunked by `chunk`.
struct PrecisionConfig {
    FloatFormat fp_mult = FloatFormat::fp8();
    FloatFormat fp_acc = FloatFormat::fp16();
    RoundingMode acc_rounding = RoundingMode::NearestEven;
    ChunkSpec chunk{64};
    double loss_scale = 1000.0;

    void validate() const {
        fp_mult.validate();
        fp_acc.validate();
        chunk.validate();
        if (!(loss_scale > 0)) throw std::invalid_argument("PrecisionConfig: loss_scale must be > 0");
    }
};

/// Per-call arithmetic event counters, exported in run reports.
struct OpStats {
    uint64_t additions = 0;        // exact_add invocations
    uint64_t exact_additions = 0;  // adds delivered with no rounding
    uint64_t roundings = 0;        // inexact rounding events (any op)
    uint64_t saturations = 0;      // overflow clamps to max-normal

    void absorb(const RoundFlags& fl, bool is_add) {
        if (is_add) {
            ++additions;
            if (!fl.inexact) ++exact_additions;
        }
        if (fl.inexact) ++roundings;
        if (fl.saturated) ++saturations;
    }
    OpStats& operator+=(const OpStats& o) {
        additions += o.additions;
        exact_additions += o.exact_additions;
        roundings += o.roundings;
        saturations += o.saturations;
        return *this;
    }
};

/// A tensor of bit patterns in one format, row-major. `id` is a stable
/// identifier used to key stochastic-rounding draws.
struct Tensor {
    std::vector<size_t> shape;
    FloatFormat fmt;
    std::vector<uint32_t> bits;
    uint64_t id = 0;

    Tensor() = default;
    Tensor(std::vector<size_t> shape_, FloatFormat fmt_, uint64_t id_ = 0)
        : shape(std::move(shape_)), fmt(fmt_), id(id_) {
        bits.assign(element_count(shape), 0);
    }

    static size_t element_count(const std::vector<size_t>& s) {
        return std::accumulate(s.begin(), s.end(), size_t{1}, std::multiplies<>());
    }

    size_t size() const { return bits.size(); }
    size_t dim(size_t i) const { return shape.at(i); }

    double value_at(size_t i) const { return decode(bits[i], fmt); }
    void set_value(size_t i, double v, RoundingMode mode = RoundingMode::NearestEven,
                   RngStream* rng = nullptr, RoundFlags* flags = nullptr) {
        bits[i] = encode_bits(v, fmt, mode, rng, flags);
    }

    /// Decode the whole tensor into wide precision.
    std::vector<double> values() const {
        std::vector<double> out(size());
        for (size_t i = 0; i < size(); ++i) out[i] = value_at(i);
        return out;
    }

    static Tensor from_values(const std::vector<size_t>& shape_, const FloatFormat& fmt_,
                              const std::vector<double>& vals, uint64_t id_ = 0,
                              RoundingMode mode = RoundingMode::NearestEven,
                              RngStream* rng = nullptr, OpStats* stats = nullptr) {
        Tensor t(shape_, fmt_, id_);
        if (vals.size() != t.size())
            throw std::invalid_argument("Tensor::from_values: element count mismatch");
        for (size_t i = 0; i < vals.size(); ++i) {
            RoundFlags fl;
            t.bits[i] = encode_bits(vals[i], fmt_, mode, rng, &fl);
            if (stats) stats->absorb(fl, false);
        }
        return t;
    }
};

} // namespace rp8
