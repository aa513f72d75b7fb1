#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "travl/attention.hpp"
#include "travl/errors.hpp"

using namespace travl;
using oracle::random_params;
using oracle::random_tokens;

namespace {

// Wo (Wv x + bv) + bo (+ x with residual), per token.
TokenTensor value_passthrough(const TokenTensor& x, const AttentionParams& p) {
    TokenTensor out(x.frames(), x.patches(), x.dim());
    for (std::size_t i = 0; i < x.token_count(); ++i) {
        const std::vector<double> xi(x.token(i).begin(), x.token(i).end());
        const auto y = oracle::affine(p.wo, p.bo, oracle::affine(p.wv, p.bv, xi));
        for (std::size_t c = 0; c < x.dim(); ++c) out.token(i)[c] = y[c] + (p.residual ? xi[c] : 0.0);
    }
    return out;
}

void expect_near(const TokenTensor& a, const TokenTensor& b, double tol) {
    ASSERT_TRUE(a.same_shape(b));
    for (std::size_t i = 0; i < a.values().size(); ++i) EXPECT_NEAR(a.values()[i], b.values()[i], tol) << "entry " << i;
}

TrajectoryMask random_mask(std::size_t T, std::size_t P, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<TrajectoryMask::Row> rows(T * P);
    for (auto& r : rows)
        for (std::uint32_t j = 0; j < T * P; ++j)
            if (rng() % 3 == 0) r.push_back(j);
    return TrajectoryMask::from_rows(T, P, rows);
}

}  // namespace

TEST(SpatialAttention, SinglePatchIsValuePath) {
    const auto x = random_tokens(3, 1, 4, 1);
    const auto p = random_params(4, 2, false, 2);
    expect_near(spatial_attention(x, p).output(), value_passthrough(x, p), 1e-12);
}

TEST(SpatialAttention, TwoTokenHandExample) {
    const double l3 = std::log(3.0);
    const TokenTensor x(1, 2, 1, {0.0, l3});
    const auto tape = spatial_attention(x, AttentionParams::identity(1, 1, AttentionRole::spatial));
    EXPECT_NEAR(tape.output().at(0, 0, 0), 0.5 * l3, 1e-12);
    EXPECT_NEAR(tape.output().at(0, 0, 0), 0.5493061443, 1e-9);
    const double w = std::exp(l3 * l3);
    EXPECT_NEAR(tape.output().at(0, 1, 0), l3 * w / (1.0 + w), 1e-12);
    EXPECT_NEAR(tape.weights(1, 0)[1], w / (1.0 + w), 1e-12);
}

TEST(SpatialAttention, EqualsFrameBlockMask) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto x = random_tokens(3, 4, 4, seed);
        const auto p = random_params(4, 2, seed % 2, seed + 100);
        expect_near(spatial_attention(x, p).output(),
                    masked_temporal_attention(x, TrajectoryMask::frame_blocks(3, 4), p).output(), 1e-12);
    }
}

TEST(SpatialAttention, DimMismatch) {
    EXPECT_THROW(spatial_attention(random_tokens(1, 2, 4, 0), random_params(2, 1, false, 0)), ValidationError);
    EXPECT_THROW(random_params(4, 3, false, 0), ValidationError);
}

TEST(MaskedAttention, IdentityMaskIsValuePath) {
    const auto x = random_tokens(3, 4, 4, 5);
    for (bool residual : {false, true}) {
        const auto p = random_params(4, 2, residual, 6);
        expect_near(masked_temporal_attention(x, TrajectoryMask(3, 4), p).output(), value_passthrough(x, p), 1e-12);
    }
}

TEST(MaskedAttention, FullMaskIsDense) {
    const auto x = random_tokens(3, 3, 4, 7);
    for (std::size_t heads : {1u, 2u, 4u}) {
        const auto p = random_params(4, heads, false, 8 + heads);
        expect_near(masked_temporal_attention(x, TrajectoryMask::full(3, 3), p).output(),
                    oracle::dense_attention(x, [](std::size_t, std::size_t) { return true; }, p), 1e-10);
    }
}

TEST(MaskedAttention, RandomMaskMatchesDenseOracle) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto x = random_tokens(3, 4, 4, seed);
        const auto m = random_mask(3, 4, seed);
        const auto p = random_params(4, 1 + seed % 2, seed % 3 == 0, seed + 50);
        const auto tape = masked_temporal_attention(x, m, p);
        expect_near(tape.output(),
                    oracle::dense_attention(x, [&](std::size_t i, std::size_t j) { return m.contains(i, j); }, p),
                    1e-10);
        EXPECT_LT(tape.max_row_sum_deviation(), 1e-12);
        EXPECT_EQ(tape.replay(), tape.output());
    }
}

TEST(MaskedAttention, SmallHandInstance) {
    const TokenTensor x(2, 2, 1, {0.3, -1.0, 0.8, 2.0});
    const auto m = TrajectoryMask::from_rows(2, 2, {{0, 2}, {1}, {2}, {3}});
    const auto out = masked_temporal_attention(x, m, AttentionParams::identity(1, 1, AttentionRole::temporal)).output();
    const double a = std::exp(0.3 * 0.3), b = std::exp(0.3 * 0.8);
    EXPECT_NEAR(out.values()[0], (a * 0.3 + b * 0.8) / (a + b), 1e-12);
    EXPECT_DOUBLE_EQ(out.values()[1], -1.0);
    EXPECT_DOUBLE_EQ(out.values()[2], 0.8);
    EXPECT_DOUBLE_EQ(out.values()[3], 2.0);
}

TEST(MaskedAttention, MaskSizeMismatch) {
    EXPECT_THROW(masked_temporal_attention(random_tokens(2, 2, 2, 0), TrajectoryMask(3, 2), random_params(2, 1, false, 0)),
                 ValidationError);
}

TEST(ChunkStarts, Layout) {
    EXPECT_EQ(chunk_starts(8, 4, 2), (std::vector<std::size_t>{0, 2, 4}));
    EXPECT_EQ(chunk_starts(9, 4, 2), (std::vector<std::size_t>{0, 2, 4, 5}));
    EXPECT_EQ(chunk_starts(3, 16, 8), (std::vector<std::size_t>{0}));
    EXPECT_THROW(chunk_starts(8, 4, 0), InvalidInput);
    EXPECT_THROW(chunk_starts(8, 4, 5), InvalidInput);
}

TEST(ChunkedAttention, FullWindowIsExact) {
    const auto x = random_tokens(5, 4, 4, 9);
    const auto m = random_mask(5, 4, 9);
    const auto p = random_params(4, 2, true, 10);
    EXPECT_EQ(chunked_temporal_attention(x, m, p, 5, 3), masked_temporal_attention(x, m, p).output());
}

TEST(ChunkedAttention, UnitWindowIdentityIsValuePath) {
    const auto x = random_tokens(4, 3, 4, 11);
    const auto p = random_params(4, 2, false, 12);
    expect_near(chunked_temporal_attention(x, TrajectoryMask(4, 3), p, 1, 1), value_passthrough(x, p), 1e-12);
}

TEST(ChunkedAttention, OverlapAveragesWindows) {
    const std::size_t T = 8, P = 2, d = 4;
    const auto x = random_tokens(T, P, d, 13);
    const auto m = random_mask(T, P, 13);
    const auto p = random_params(d, 2, false, 14);
    const auto out = chunked_temporal_attention(x, m, p, 4, 2);

    auto window_output = [&](std::size_t s) {
        std::vector<double> v(x.values().begin() + s * P * d, x.values().begin() + (s + 4) * P * d);
        const TokenTensor sub(4, P, d, v);
        return oracle::dense_attention(
            sub, [&](std::size_t i, std::size_t j) { return m.contains(i + s * P, j + s * P); }, p);
    };
    const auto w0 = window_output(0), w2 = window_output(2), w4 = window_output(4);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t q = 0; q < P; ++q)
            for (std::size_t c = 0; c < d; ++c) {
                double sum = 0.0;
                int n = 0;
                if (t < 4) sum += w0.at(t, q, c), ++n;
                if (t >= 2 && t < 6) sum += w2.at(t - 2, q, c), ++n;
                if (t >= 4) sum += w4.at(t - 4, q, c), ++n;
                EXPECT_NEAR(out.at(t, q, c), sum / n, 1e-10) << t << "," << q << "," << c;
            }
}

TEST(AttentionBackward, ZeroUpstreamGivesZero) {
    const auto x = random_tokens(2, 3, 4, 15);
    const auto tape = masked_temporal_attention(x, random_mask(2, 3, 15), random_params(4, 2, true, 16));
    const auto g = attention_backward(tape, TokenTensor(2, 3, 4));
    for (double v : g.input.values()) EXPECT_EQ(v, 0.0);
    g.params.for_each_array([](const char*, const std::vector<double>& a) {
        for (double v : a) EXPECT_EQ(v, 0.0);
    });
}

TEST(AttentionBackward, LinearInUpstream) {
    const auto x = random_tokens(2, 3, 4, 17);
    const auto tape = spatial_attention(x, random_params(4, 2, false, 18));
    const auto up = random_tokens(2, 3, 4, 19);
    TokenTensor up2 = up;
    for (auto& v : up2.values()) v *= 2.0;
    const auto g1 = attention_backward(tape, up);
    const auto g2 = attention_backward(tape, up2);
    for (std::size_t i = 0; i < g1.input.values().size(); ++i)
        EXPECT_EQ(g2.input.values()[i], 2.0 * g1.input.values()[i]);
    EXPECT_EQ(g2.params.wq[3], 2.0 * g1.params.wq[3]);
    EXPECT_THROW(attention_backward(tape, TokenTensor(1, 3, 4)), ValidationError);
}

TEST(AttentionBackward, FiniteDifferencesSpatial) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const std::size_t T = 1 + seed % 3, P = 12 / (T * 2), d = seed % 2 ? 4 : 2;
        const auto x = random_tokens(T, P, d, seed);
        const auto p = random_params(d, d == 4 ? 2 : 1, seed % 2, seed + 30);
        const auto up = random_tokens(T, P, d, seed + 60);
        const auto g = attention_backward(spatial_attention(x, p), up);
        const double err = oracle::attention_fd_error(
            x, p, up, [](const TokenTensor& a, const AttentionParams& q) { return spatial_attention(a, q).output(); }, g);
        EXPECT_LT(err, 1e-4) << "seed " << seed;
    }
}

TEST(AttentionBackward, FiniteDifferencesMasked) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const std::size_t T = 2 + seed % 2, P = T == 2 ? 6 : 4, d = 4;
        const auto x = random_tokens(T, P, d, seed);
        const auto m = random_mask(T, P, seed);
        const auto p = random_params(d, 1 + seed % 2, seed % 2 == 0, seed + 40);
        const auto up = random_tokens(T, P, d, seed + 70);
        const auto g = attention_backward(masked_temporal_attention(x, m, p), up);
        const double err = oracle::attention_fd_error(
            x, p, up,
            [&](const TokenTensor& a, const AttentionParams& q) { return masked_temporal_attention(a, m, q).output(); },
            g);
        EXPECT_LT(err, 1e-4) << "seed " << seed;
    }
}

TEST(AttentionBackward, FiniteDifferencesChunked) {
    const std::size_t T = 6, P = 2, d = 2;
    const auto x = random_tokens(T, P, d, 80);
    const auto m = random_mask(T, P, 80);
    const auto p = random_params(d, 1, true, 81);
    const auto up = random_tokens(T, P, d, 82);
    const auto g = chunked_backward(chunked_temporal_attention_tape(x, m, p, 4, 2), up);
    const double err = oracle::attention_fd_error(
        x, p, up,
        [&](const TokenTensor& a, const AttentionParams& q) { return chunked_temporal_attention(a, m, q, 4, 2); }, g);
    EXPECT_LT(err, 1e-4);
}

TEST(AttentionBackward, KeyBiasGradientVanishes) {
    const auto x = random_tokens(2, 3, 4, 90);
    const auto p = random_params(4, 2, false, 91);
    const auto g = attention_backward(masked_temporal_attention(x, random_mask(2, 3, 90), p), random_tokens(2, 3, 4, 92));
    for (double v : g.params.bk) EXPECT_LT(std::fabs(v), 1e-12);
}
