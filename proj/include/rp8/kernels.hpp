// Copyright (c) 2026 rp8 contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "rp8/minifloat.hpp"
#include "rp8/rng.hpp"
#include "rp8/tensor.hpp"

namespace rp8 {

namespace detail {

/// Multiply one pair of encoded operands exactly and round once (nearest)
/// into the accumulator format. FP8 x FP8 into FP16 never rounds.
inline uint32_t product_bits(uint32_t a, const FloatFormat& fa, uint32_t b, const FloatFormat& fb,
                             const FloatFormat& acc, OpStats* stats) {
    Unpacked ua = unpack(a, fa);
    Unpacked ub = unpack(b, fb);
    RoundFlags fl;
    uint32_t r = round_unpacked(ua.negative != ub.negative, ua.sig * ub.sig, ua.exp2 + ub.exp2,
                                acc, RoundingMode::NearestEven, nullptr, &fl);
    if (stats) stats->absorb(fl, false);
    return r;
}

/// acc <- round(acc + addend) in `acc_fmt` under `mode`, exact pre-round sum.
inline uint32_t accumulate_bits(uint32_t acc, const Unpacked& addend, const FloatFormat& acc_fmt,
                                RoundingMode mode, RngStream* rng, OpStats* stats) {
    Unpacked uacc = unpack(acc, acc_fmt);
    RoundFlags fl;
    uint32_t r = add_unpacked(uacc, addend, acc_fmt, mode, rng, &fl);
    if (stats) stats->absorb(fl, true);
    return r;
}

/// Chunked reduced-precision dot product over strided bit arrays.
/// Element products are accumulated into an intra-chunk sum, chunk sums into
/// the running total; one carried accumulator per level, both in `fp_acc`,
/// strictly ascending index order at both levels.
inline uint32_t dot_core(const uint32_t* a, size_t stride_a, const FloatFormat& fa,
                         const uint32_t* b, size_t stride_b, const FloatFormat& fb, size_t n,
                         const PrecisionConfig& cfg, RngStream rng, OpStats* stats) {
    const FloatFormat& acc = cfg.fp_acc;
    const size_t cl = cfg.chunk.cl;
    uint32_t total = 0;
    for (size_t start = 0; start < n; start += cl) {
        const size_t end = start + cl < n ? start + cl : n;
        uint32_t csum = 0;
        for (size_t i = start; i < end; ++i) {
            uint32_t p = product_bits(a[i * stride_a], fa, b[i * stride_b], fb, acc, stats);
            csum = accumulate_bits(csum, unpack(p, acc), acc, cfg.acc_rounding, &rng, stats);
        }
        total = accumulate_bits(total, unpack(csum, acc), acc, cfg.acc_rounding, &rng, stats);
    }
    return total;
}

} // namespace detail

/// Chunk-based dot product of two equal-length vectors. The stream `rng`
/// feeds stochastic accumulation draws (unused under nearest rounding).
inline Encoded chunked_dot(const Tensor& a, const Tensor& b, const PrecisionConfig& cfg,
                           RngStream rng = RngStream::root(0), OpStats* stats = nullptr) {
    if (a.size() != b.size()) throw std::invalid_argument("chunked_dot: length mismatch");
    uint32_t r = detail::dot_core(a.bits.data(), 1, a.fmt, b.bits.data(), 1, b.fmt, a.size(), cfg,
                                  rng, stats);
    return Encoded{r, cfg.fp_acc};
}

/// C[i,j] = chunked_dot(row i of op(A), column j of op(B)), bit-exactly.
/// Output elements are independent; each derives its own draw stream from
/// (rng, flat output index), so results are identical for any thread count.
inline Tensor chunked_gemm_t(const Tensor& A, bool trans_a, const Tensor& B, bool trans_b,
                             const PrecisionConfig& cfg, RngStream rng = RngStream::root(0),
                             OpStats* stats = nullptr, uint64_t out_id = 0) {
    if (A.shape.size() != 2 || B.shape.size() != 2)
        throw std::invalid_argument("chunked_gemm: operands must be 2-D");
    const size_t m = trans_a ? A.dim(1) : A.dim(0);
    const size_t ka = trans_a ? A.dim(0) : A.dim(1);
    const size_t kb = trans_b ? B.dim(1) : B.dim(0);
    const size_t n = trans_b ? B.dim(0) : B.dim(1);
    if (ka != kb) throw std::invalid_argument("chunked_gemm: inner dimensions disagree");

    Tensor C({m, n}, cfg.fp_acc, out_id);
    const size_t lda = A.dim(1), ldb = B.dim(1);
    const uint32_t* pa = A.bits.data();
    const uint32_t* pb = B.bits.data();
    uint32_t* pc = C.bits.data();

    OpStats total_stats;
#ifdef _OPENMP
#pragma omp parallel
    {
        OpStats local;
#pragma omp for schedule(static)
        for (long idx = 0; idx < static_cast<long>(m * n); ++idx) {
            const size_t i = static_cast<size_t>(idx) / n;
            const size_t j = static_cast<size_t>(idx) % n;
            const uint32_t* ra = trans_a ? pa + i : pa + i * lda;
            const size_t sa = trans_a ? lda : 1;
            const uint32_t* rb = trans_b ? pb + j * ldb : pb + j;
            const size_t sb = trans_b ? 1 : ldb;
            pc[idx] = detail::dot_core(ra, sa, A.fmt, rb, sb, B.fmt, ka, cfg,
                                       rng.derive(static_cast<uint64_t>(idx)), &local);
        }
#pragma omp critical
        total_stats += local;
    }
#else
    for (size_t idx = 0; idx < m * n; ++idx) {
        const size_t i = idx / n;
        const size_t j = idx % n;
        const uint32_t* ra = trans_a ? pa + i : pa + i * lda;
        const size_t sa = trans_a ? lda : 1;
        const uint32_t* rb = trans_b ? pb + j * ldb : pb + j;
        const size_t sb = trans_b ? 1 : ldb;
        pc[idx] = detail::dot_core(ra, sa, A.fmt, rb, sb, B.fmt, ka, cfg, rng.derive(idx),
                                   &total_stats);
    }
#endif
    if (stats) *stats += total_stats;
    return C;
}

inline Tensor chunked_gemm(const Tensor& A, const Tensor& B, const PrecisionConfig& cfg,
                           RngStream rng = RngStream::root(0), OpStats* stats = nullptr,
                           uint64_t out_id = 0) {
    return chunked_gemm_t(A, false, B, false, cfg, rng, stats, out_id);
}

/// Elementwise y' = round(y + alpha*x) with the product and sum exact before
/// one rounding into y's format. Stochastic by default; the nearest variant
/// exists for the rounding-mode study.
inline Tensor axpy_sr(const Tensor& y, const Encoded& alpha, const Tensor& x, RngStream rng,
                      OpStats* stats = nullptr, RoundingMode mode = RoundingMode::Stochastic) {
    if (y.shape != x.shape) throw std::invalid_argument("axpy_sr: shape mismatch");
    Tensor out(y.shape, y.fmt, y.id);
    Unpacked ua = unpack(alpha.bits, alpha.fmt);
    OpStats local;
    for (size_t i = 0; i < y.size(); ++i) {
        Unpacked ux = unpack(x.bits[i], x.fmt);
        Unpacked prod{ua.negative != ux.negative, ua.sig * ux.sig, ua.exp2 + ux.exp2};
        Unpacked uy = unpack(y.bits[i], y.fmt);
        RoundFlags fl;
        RngStream er = rng.derive(i);
        out.bits[i] = detail::add_unpacked(uy, prod, y.fmt, mode, &er, &fl);
        local.absorb(fl, true);
    }
    if (stats) *stats += local;
    return out;
}

/// Elementwise re-encoding into another format.
inline Tensor convert_tensor(const Tensor& t, const FloatFormat& fmt,
                             RoundingMode mode = RoundingMode::NearestEven,
                             RngStream rng = RngStream::root(0), OpStats* stats = nullptr) {
    Tensor out(t.shape, fmt, t.id);
    for (size_t i = 0; i < t.size(); ++i) {
        RoundFlags fl;
        RngStream er = rng.derive(i);
        out.bits[i] = encode_bits(decode(t.bits[i], t.fmt), fmt, mode,
                                  mode == RoundingMode::Stochastic ? &er : nullptr, &fl);
        if (stats) stats->absorb(fl, false);
    }
    return out;
}

/// Multiply the softmax-input error by the loss scale (exact product,
/// nearest rounding back into the tensor's format).
inline Tensor scale_loss(const Tensor& err, const PrecisionConfig& cfg, OpStats* stats = nullptr) {
    Tensor out(err.shape, err.fmt, err.id);
    for (size_t i = 0; i < err.size(); ++i) {
        RoundFlags fl;
        out.bits[i] = encode_bits(decode(err.bits[i], err.fmt) * cfg.loss_scale, err.fmt,
                                  RoundingMode::NearestEven, nullptr, &fl);
        if (stats) stats->absorb(fl, false);
    }
    return out;
}

/// Divide weight gradients by the loss scale before the update AXPYs.
inline Tensor unscale_grad(const Tensor& g, const PrecisionConfig& cfg, OpStats* stats = nullptr) {
    Tensor out(g.shape, g.fmt, g.id);
    for (size_t i = 0; i < g.size(); ++i) {
        RoundFlags fl;
        out.bits[i] = encode_bits(decode(g.bits[i], g.fmt) / cfg.loss_scale, g.fmt,
                                  RoundingMode::NearestEven, nullptr, &fl);
        if (stats) stats->absorb(fl, false);
    }
    return out;
}

} // namespace rp8
