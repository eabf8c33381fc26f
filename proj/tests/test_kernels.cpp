// Copyright (c) 2026 rp8 contributors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <catch2/catch_amalgamated.hpp>

#include "rp8/kernels.hpp"

using namespace rp8;

namespace {

const FloatFormat kFp8 = FloatFormat::fp8();
const FloatFormat kFp16 = FloatFormat::fp16();

Tensor const_tensor(std::vector<size_t> shape, const FloatFormat& f, double v, uint64_t id = 0) {
    Tensor t(std::move(shape), f, id);
    uint32_t b = encode_bits(v, f, RoundingMode::NearestEven);
    for (auto& e : t.bits) e = b;
    return t;
}

Tensor random_tensor(std::vector<size_t> shape, const FloatFormat& f, std::mt19937_64& gen,
                     double lo = -2.0, double hi = 2.0, uint64_t id = 0) {
    Tensor t(std::move(shape), f, id);
    std::uniform_real_distribution<double> d(lo, hi);
    for (auto& e : t.bits) e = encode_bits(d(gen), f, RoundingMode::NearestEven);
    return t;
}

PrecisionConfig default_cfg(size_t cl = 64, RoundingMode mode = RoundingMode::NearestEven) {
    PrecisionConfig cfg;
    cfg.chunk = ChunkSpec(cl);
    cfg.acc_rounding = mode;
    return cfg;
}

} // namespace

TEST_CASE("chunked_dot: flat accumulation of ones stalls at the swamping point") {
    auto ones = const_tensor({4096}, kFp8, 1.0);
    auto r = chunked_dot(ones, ones, default_cfg(1));
    CHECK(decode(r) == 1024.0); // 1.0 becomes a tie at 1024, then sub-half-ulp
}

TEST_CASE("chunked_dot: CL=64 sums 4096 ones exactly") {
    auto ones = const_tensor({4096}, kFp8, 1.0);
    auto r = chunked_dot(ones, ones, default_cfg(64));
    CHECK(decode(r) == 4096.0); // every partial sum is exactly representable
}

TEST_CASE("chunked_dot: singleton reduces to exact_mul") {
    std::mt19937_64 gen(1);
    for (int i = 0; i < 50; ++i) {
        auto a = random_tensor({1}, kFp8, gen, -8.0, 8.0);
        auto b = random_tensor({1}, kFp8, gen, -8.0, 8.0);
        auto r = chunked_dot(a, b, default_cfg(64));
        auto m = exact_mul(Encoded{a.bits[0], kFp8}, Encoded{b.bits[0], kFp8}, kFp16);
        CHECK(r.bits == m.bits);
    }
}

TEST_CASE("chunked_dot: CL=1 and CL=N are the same flat accumulation") {
    std::mt19937_64 gen(2);
    auto a = random_tensor({777}, kFp8, gen);
    auto b = random_tensor({777}, kFp8, gen);
    auto flat = chunked_dot(a, b, default_cfg(1));
    auto single = chunked_dot(a, b, default_cfg(777));
    CHECK(flat.bits == single.bits);
}

TEST_CASE("chunked_dot: length mismatch is an error") {
    auto a = const_tensor({4}, kFp8, 1.0);
    auto b = const_tensor({5}, kFp8, 1.0);
    CHECK_THROWS_AS(chunked_dot(a, b, default_cfg()), std::invalid_argument);
}

TEST_CASE("chunked_dot: stochastic accumulation tracks the wide sum") {
    // Smaller cousin of the drift experiment: N = 2^16 uniform(1,1) addends.
    std::mt19937_64 gen(3);
    const size_t n = 1 << 16;
    const double lo = 1.0 - std::sqrt(3.0), hi = 1.0 + std::sqrt(3.0);
    auto a = random_tensor({n}, kFp8, gen, lo, hi);
    auto ones = const_tensor({n}, kFp8, 1.0);
    double wide = 0;
    for (size_t i = 0; i < n; ++i) wide += a.value_at(i);

    auto sr = chunked_dot(a, ones, default_cfg(1, RoundingMode::Stochastic),
                          RngStream::root(77));
    CHECK(std::fabs(decode(sr) - wide) / std::fabs(wide) < 0.05);

    auto ne = chunked_dot(a, ones, default_cfg(1));
    CHECK(std::fabs(decode(ne) - wide) / std::fabs(wide) > 0.40); // swamped
}

TEST_CASE("chunked_gemm equals per-element chunked_dot, bit-exactly") {
    std::mt19937_64 gen(20260810);
    std::uniform_int_distribution<size_t> dim(1, 128);
    for (int trial = 0; trial < 100; ++trial) {
        const size_t m = dim(gen), k = dim(gen), n = dim(gen);
        const bool mixed = trial % 3 == 1;
        const bool stochastic = trial % 3 == 2;
        auto A = random_tensor({m, k}, mixed ? kFp16 : kFp8, gen, -3.0, 3.0, 11);
        auto B = random_tensor({k, n}, kFp8, gen, -3.0, 3.0, 12);
        PrecisionConfig cfg = default_cfg(
            trial % 5 == 0 ? 1 : (trial % 5 == 1 ? k : 1 + gen() % 200),
            stochastic ? RoundingMode::Stochastic : RoundingMode::NearestEven);
        RngStream rng = RngStream::for_element(9, 99, 0, trial);

        auto C = chunked_gemm(A, B, cfg, rng);
        REQUIRE(C.shape == std::vector<size_t>({m, n}));
        // Scalar oracle: one dot per element, same derived stream.
        for (size_t i = 0; i < m; ++i) {
            for (size_t j = 0; j < n; ++j) {
                Tensor row({k}, A.fmt);
                Tensor col({k}, B.fmt);
                for (size_t t = 0; t < k; ++t) {
                    row.bits[t] = A.bits[i * k + t];
                    col.bits[t] = B.bits[t * n + j];
                }
                auto d = chunked_dot(row, col, cfg, rng.derive(i * n + j));
                REQUIRE(C.bits[i * n + j] == d.bits);
            }
        }
    }
}

TEST_CASE("chunked_gemm: identity, degenerate shapes, errors") {
    std::mt19937_64 gen(6);
    SECTION("identity matrix returns the operand widened to FP16") {
        Tensor I({2, 2}, kFp8);
        I.set_value(0, 1.0);
        I.set_value(3, 1.0);
        auto B = random_tensor({2, 2}, kFp8, gen);
        auto C = chunked_gemm(I, B, default_cfg());
        for (size_t i = 0; i < 4; ++i) CHECK(C.value_at(i) == B.value_at(i));
    }
    SECTION("1xKx1 equals chunked_dot directly") {
        auto a = random_tensor({1, 300}, kFp8, gen);
        auto b = random_tensor({300, 1}, kFp8, gen);
        auto C = chunked_gemm(a, b, default_cfg(7));
        Tensor av({300}, kFp8), bv({300}, kFp8);
        av.bits = a.bits;
        bv.bits = b.bits;
        auto d = chunked_dot(av, bv, default_cfg(7), RngStream::root(0).derive(0));
        CHECK(C.bits[0] == d.bits);
    }
    SECTION("inner dimension mismatch throws") {
        auto a = random_tensor({2, 3}, kFp8, gen);
        auto b = random_tensor({4, 2}, kFp8, gen);
        CHECK_THROWS_AS(chunked_gemm(a, b, default_cfg()), std::invalid_argument);
    }
}

TEST_CASE("chunked_gemm transposed variants match materialized transposes") {
    std::mt19937_64 gen(7);
    const size_t m = 9, k = 33, n = 5;
    auto A = random_tensor({m, k}, kFp8, gen);
    auto B = random_tensor({k, n}, kFp8, gen);
    Tensor At({k, m}, kFp8);
    Tensor Bt({n, k}, kFp8);
    for (size_t i = 0; i < m; ++i)
        for (size_t t = 0; t < k; ++t) At.bits[t * m + i] = A.bits[i * k + t];
    for (size_t t = 0; t < k; ++t)
        for (size_t j = 0; j < n; ++j) Bt.bits[j * k + t] = B.bits[t * n + j];

    auto C = chunked_gemm(A, B, default_cfg(8));
    auto Cta = chunked_gemm_t(At, true, B, false, default_cfg(8));
    auto Ctb = chunked_gemm_t(A, false, Bt, true, default_cfg(8));
    CHECK(C.bits == Cta.bits);
    CHECK(C.bits == Ctb.bits);
}

#ifdef _OPENMP
TEST_CASE("chunked_gemm is bit-identical for any thread count") {
    std::mt19937_64 gen(8);
    auto A = random_tensor({40, 130}, kFp8, gen, -3.0, 3.0);
    auto B = random_tensor({130, 37}, kFp8, gen, -3.0, 3.0);
    auto cfg = default_cfg(16, RoundingMode::Stochastic);
    RngStream rng = RngStream::for_element(4, 40, 1, 0);
    int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    auto C1 = chunked_gemm(A, B, cfg, rng);
    omp_set_num_threads(saved > 1 ? saved : 2);
    auto C2 = chunked_gemm(A, B, cfg, rng);
    omp_set_num_threads(saved);
    CHECK(C1.bits == C2.bits);
}
#endif

TEST_CASE("axpy_sr: pinned behavior") {
    SECTION("alpha = 0 is a bit-exact no-op") {
        std::mt19937_64 gen(9);
        auto y = random_tensor({64}, kFp16, gen);
        auto x = random_tensor({64}, kFp16, gen);
        auto out = axpy_sr(y, encode(0.0, kFp16), x, RngStream::root(1));
        CHECK(out.bits == y.bits);
    }
    SECTION("y = 0, alpha = 1 copies x") {
        std::mt19937_64 gen(10);
        auto y = const_tensor({64}, kFp16, 0.0);
        auto x = random_tensor({64}, kFp16, gen);
        auto out = axpy_sr(y, encode(1.0, kFp16), x, RngStream::root(2));
        for (size_t i = 0; i < x.size(); ++i) CHECK(out.value_at(i) == x.value_at(i));
    }
    SECTION("sub-half-ulp updates land with the residual probability") {
        // y = 1.0, alpha*x = -2^-13. The exact result 1 - 2^-13 lies in the
        // [0.5, 1) binade whose spacing is 2^-10, so stochastic rounding
        // yields 1 - 2^-10 with probability 1/8 and 1.0 otherwise.
        const size_t n = 100000;
        auto y = const_tensor({n}, kFp16, 1.0);
        auto x = const_tensor({n}, kFp16, 1.0);
        auto alpha = encode(-0x1.0p-13, kFp16);
        auto out = axpy_sr(y, alpha, x, RngStream::for_element(31, 1, 0, 0));
        size_t moved = 0;
        for (size_t i = 0; i < n; ++i) {
            double v = out.value_at(i);
            REQUIRE((v == 1.0 || v == 1.0 - 0x1.0p-10));
            moved += v != 1.0;
        }
        double p = double(moved) / double(n);
        CHECK_THAT(p, Catch::Matchers::WithinAbs(0.125, 0.0042)); // 4 sigma
        // Nearest mode never moves: the update is below half an ulp.
        auto ne = axpy_sr(y, alpha, x, RngStream::root(0), nullptr, RoundingMode::NearestEven);
        CHECK(ne.bits == y.bits);
    }
    SECTION("shape mismatch throws") {
        auto y = const_tensor({3}, kFp16, 0.0);
        auto x = const_tensor({4}, kFp16, 0.0);
        CHECK_THROWS_AS(axpy_sr(y, encode(1.0, kFp16), x, RngStream::root(0)),
                        std::invalid_argument);
    }
}

TEST_CASE("convert_tensor: pinned conversions") {
    SECTION("FP8 -> FP16 -> FP8 is the identity on every finite pattern") {
        Tensor t({248}, kFp8);
        size_t k = 0;
        for (uint32_t p = 0; p < 256; ++p) {
            if (is_nan(p, kFp8) || is_inf(p, kFp8)) continue;
            t.bits[k++] = p;
        }
        REQUIRE(k == 248); // 256 patterns minus 2 Inf and 6 NaN
        auto wide = convert_tensor(t, kFp16);
        auto back = convert_tensor(wide, kFp8);
        CHECK(back.bits == t.bits);
    }
    SECTION("FP16 1.1 narrows to 1.0") {
        Tensor t({1}, kFp16);
        t.set_value(0, 1.1);
        CHECK(convert_tensor(t, kFp8).value_at(0) == 1.0);
    }
    SECTION("FP16 max normal saturates to FP8 max normal") {
        Tensor t({1}, kFp16);
        t.set_value(0, kFp16.max_normal_value());
        OpStats st;
        auto out = convert_tensor(t, kFp8, RoundingMode::NearestEven, RngStream::root(0), &st);
        CHECK(out.value_at(0) == 57344.0);
        CHECK(st.saturations == 1);
    }
}

TEST_CASE("loss scaling") {
    PrecisionConfig cfg = default_cfg();
    SECTION("scale of 1 is a rounding-only identity") {
        cfg.loss_scale = 1.0;
        std::mt19937_64 gen(11);
        auto t = random_tensor({32}, kFp16, gen);
        CHECK(scale_loss(t, cfg).bits == t.bits);
        CHECK(unscale_grad(t, cfg).bits == t.bits);
    }
    SECTION("2^-20 scaled by 1000 rounds to FP16") {
        Tensor t({1}, kFp16);
        t.set_value(0, 0x1.0p-20);
        auto s = scale_loss(t, cfg);
        double expect = decode(encode_bits(0x1.0p-20 * 1000.0, kFp16, RoundingMode::NearestEven),
                               kFp16);
        CHECK(s.value_at(0) == expect);
        CHECK_THAT(s.value_at(0), Catch::Matchers::WithinRel(9.5367431640625e-4, 0x1.0p-9));
    }
    SECTION("gradient 1000 unscales to exactly 1") {
        Tensor g({1}, kFp16);
        g.set_value(0, 1000.0);
        CHECK(unscale_grad(g, cfg).value_at(0) == 1.0);
    }
    SECTION("unscale(scale(x)) is within one rounding of x") {
        std::mt19937_64 gen(12);
        auto t = random_tensor({256}, kFp16, gen, -4.0, 4.0);
        auto roundtrip = unscale_grad(scale_loss(t, cfg), cfg);
        for (size_t i = 0; i < t.size(); ++i) {
            double ulp = std::fabs(t.value_at(i)) * 0x1.0p-9 + 0x1.0p-39;
            CHECK(std::fabs(roundtrip.value_at(i) - t.value_at(i)) <= ulp);
        }
    }
}

TEST_CASE("statistics counters") {
    SECTION("addition counts are structural") {
        auto ones = const_tensor({100}, kFp8, 1.0);
        OpStats st;
        chunked_dot(ones, ones, default_cfg(32), RngStream::root(0), &st);
        // 100 intra-chunk adds + 4 chunk merges.
        CHECK(st.additions == 104);
        CHECK(st.exact_additions == st.additions);
        CHECK(st.saturations == 0);
    }
    SECTION("accumulator overflow saturates and is counted") {
        auto big = const_tensor({4}, kFp8, 57344.0);
        OpStats st;
        auto r = chunked_dot(big, big, default_cfg(4), RngStream::root(0), &st);
        CHECK(decode(r) == kFp16.max_normal_value());
        CHECK(st.saturations > 0);
    }
}
