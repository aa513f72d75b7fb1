#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "travl/adapter.hpp"
#include "travl/errors.hpp"

using namespace travl;
using oracle::random_tokens;

namespace {

TokenTensor constant(std::size_t T, std::size_t P, std::size_t d, double c) {
    return TokenTensor(T, P, d, std::vector<double>(T * P * d, c));
}

AdapterParams random_adapter(std::size_t din, std::size_t dout, std::uint64_t seed) {
    auto p = AdapterParams::random(din, dout, seed, 3);
    std::mt19937_64 rng(seed + 1);
    std::normal_distribution<double> n(0.0, 0.5);
    for (auto* b : {&p.b1, &p.b2, &p.bc})
        for (auto& v : *b) v = n(rng);
    return p;
}

}  // namespace

TEST(AggregateVideoChatGpt, TokenCounts) {
    EXPECT_EQ(aggregate_videochatgpt(TokenTensor(100, 256, 1)).token_count(), 356u);
    EXPECT_EQ(aggregate_videochatgpt(TokenTensor(2, 4, 3)).token_count(), 6u);
}

TEST(AggregateVideoChatGpt, MeansInOrder) {
    const auto x = random_tokens(3, 4, 2, 1);
    const auto y = aggregate_videochatgpt(x);
    for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t p = 0; p < 4; ++p) {
            double s = 0.0;
            for (std::size_t t = 0; t < 3; ++t) s += x.at(t, p, c);
            EXPECT_NEAR(y.token(p)[c], s / 3.0, 1e-12);
        }
        for (std::size_t t = 0; t < 3; ++t) {
            double s = 0.0;
            for (std::size_t p = 0; p < 4; ++p) s += x.at(t, p, c);
            EXPECT_NEAR(y.token(4 + t)[c], s / 4.0, 1e-12);
        }
    }
    const auto c = aggregate_videochatgpt(constant(5, 9, 3, 2.5));
    for (double v : c.values()) EXPECT_DOUBLE_EQ(v, 2.5);
}

TEST(AggregateLlavaNext, PoolFactors) {
    const auto x = random_tokens(2, 16, 3, 2);
    EXPECT_EQ(aggregate_llavanext(x, 1), x);
    const auto whole = aggregate_llavanext(x, 4);
    ASSERT_EQ(whole.patches(), 1u);
    for (std::size_t t = 0; t < 2; ++t) {
        double s = 0.0;
        for (std::size_t p = 0; p < 16; ++p) s += x.at(t, p, 1);
        EXPECT_NEAR(whole.at(t, 0, 1), s / 16.0, 1e-12);
    }
    EXPECT_EQ(aggregate_llavanext(TokenTensor(2, 25, 1), 2).patches(), 9u);
    EXPECT_THROW(aggregate_llavanext(TokenTensor(1, 6, 1), 2), ValidationError);
    EXPECT_THROW(aggregate_llavanext(x, 0), InvalidInput);
}

TEST(AggregateLlavaNext, RampBlocks) {
    std::vector<double> ramp(16);
    for (std::size_t i = 0; i < 16; ++i) ramp[i] = static_cast<double>(i);
    const auto y = aggregate_llavanext(TokenTensor(1, 16, 1, ramp), 2);
    ASSERT_EQ(y.patches(), 4u);
    EXPECT_DOUBLE_EQ(y.values()[0], (0 + 1 + 4 + 5) / 4.0);
    EXPECT_DOUBLE_EQ(y.values()[1], (2 + 3 + 6 + 7) / 4.0);
    EXPECT_DOUBLE_EQ(y.values()[2], (8 + 9 + 12 + 13) / 4.0);
    EXPECT_DOUBLE_EQ(y.values()[3], (10 + 11 + 14 + 15) / 4.0);
}

TEST(AggregateBackward, MatchesFiniteDifferences) {
    auto x = random_tokens(3, 9, 2, 3);
    const auto up_v = random_tokens(1, 12, 2, 4);
    const auto gv = aggregate_videochatgpt_backward(up_v, 3, 9);
    EXPECT_LT(oracle::fd_error([&] { return oracle::inner(aggregate_videochatgpt(x), up_v); }, x.values(), gv.values()),
              1e-7);
    const auto up_l = random_tokens(3, 4, 2, 5);
    const auto gl = aggregate_llavanext_backward(up_l, 9, 2);
    EXPECT_LT(oracle::fd_error([&] { return oracle::inner(aggregate_llavanext(x, 2), up_l); }, x.values(), gl.values()),
              1e-7);
}

TEST(Gelu, TailsAndDerivative) {
    for (double x : {6.0, 8.0, 20.0}) EXPECT_NEAR(gelu(x), x, 1e-3);
    EXPECT_EQ(gelu(0.0), 0.0);
    for (double x : {-2.0, -0.3, 0.0, 0.7, 3.0}) {
        const double h = 1e-6;
        EXPECT_NEAR(gelu_derivative(x), (gelu(x + h) - gelu(x - h)) / (2 * h), 1e-8);
    }
}

TEST(Project, ZeroWeightsGiveBias) {
    auto p = AdapterParams::random(3, 2, 0);
    for (auto* w : {&p.w1, &p.w2}) std::fill(w->begin(), w->end(), 0.0);
    p.b2 = {0.25, -4.0};
    const auto out = project(random_tokens(2, 3, 3, 6), p).output;
    for (std::size_t i = 0; i < out.token_count(); ++i) {
        EXPECT_DOUBLE_EQ(out.token(i)[0], 0.25);
        EXPECT_DOUBLE_EQ(out.token(i)[1], -4.0);
    }
}

TEST(Project, IdentityLikeWeightsPassLargeInputs) {
    const std::size_t d = 3;
    auto p = AdapterParams::random(d, d, 0);
    std::fill(p.w1.begin(), p.w1.end(), 0.0);
    std::fill(p.w2.begin(), p.w2.end(), 0.0);
    for (std::size_t a = 0; a < d; ++a) {
        p.w1[a * d + a] = 1.0;
        p.w2[a * p.dim_hidden + a] = 1.0;
    }
    std::vector<double> v = {6.0, 7.5, 10.0, 6.2, 30.0, 9.0};
    const TokenTensor x(1, 2, d, v);
    const auto out = project(x, p).output;
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(out.values()[i], v[i], 1e-3);
    EXPECT_THROW(project(TokenTensor(1, 1, 4), p), ValidationError);
}

TEST(Project, FiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        auto x = random_tokens(2, 3, 4, seed);
        auto p = random_adapter(4, 3, seed + 10);
        const auto up = random_tokens(2, 3, 3, seed + 20);
        AdapterParams g = p.zeros_like();
        const auto gx = project_backward(project(x, p), p, up, g);
        auto loss = [&] { return oracle::inner(project(x, p).output, up); };
        EXPECT_LT(oracle::fd_error(loss, x.values(), gx.values()), 1e-4);
        EXPECT_LT(oracle::fd_error(loss, p.w1, g.w1), 1e-4);
        EXPECT_LT(oracle::fd_error(loss, p.b1, g.b1), 1e-4);
        EXPECT_LT(oracle::fd_error(loss, p.w2, g.w2), 1e-4);
        EXPECT_LT(oracle::fd_error(loss, p.b2, g.b2), 1e-4);
    }
}

TEST(Classify, BiasAndChannelReadout) {
    auto p = AdapterParams::random(2, 3, 1);
    std::fill(p.wc.begin(), p.wc.end(), 0.0);
    p.bc = {0.4, -0.9};
    const auto z = classify_plausibility(TokenTensor(1, 2, 3), p);
    EXPECT_DOUBLE_EQ(z[0], 0.4);
    EXPECT_DOUBLE_EQ(z[1], -0.9);

    p.bc = {0.0, 0.0};
    p.wc = {1, 0, 0, 0, 1, 0};
    const auto r = classify_plausibility(TokenTensor(1, 1, 3, {2.0, -3.0, 7.0}), p);
    EXPECT_DOUBLE_EQ(r[0], 2.0);
    EXPECT_DOUBLE_EQ(r[1], -3.0);
    const auto s = softmax2({1000.0, -5.0});
    EXPECT_NEAR(s[0] + s[1], 1.0, 1e-9);
    const auto t = softmax2({0.3, 0.1});
    EXPECT_NEAR(t[0] + t[1], 1.0, 1e-9);
}

TEST(Classify, FiniteDifferences) {
    auto x = random_tokens(2, 3, 3, 7);
    auto p = random_adapter(4, 3, 8);
    const std::array<double, 2> gl = {0.7, -1.3};
    AdapterParams g = p.zeros_like();
    const auto gx = classify_backward(x, p, gl, g);
    auto loss = [&] {
        const auto z = classify_plausibility(x, p);
        return gl[0] * z[0] + gl[1] * z[1];
    };
    EXPECT_LT(oracle::fd_error(loss, x.values(), gx.values()), 1e-6);
    EXPECT_LT(oracle::fd_error(loss, p.wc, g.wc), 1e-6);
    EXPECT_LT(oracle::fd_error(loss, p.bc, g.bc), 1e-6);
}

TEST(Layout, Names) {
    EXPECT_EQ(parse_layout(to_string(Layout::llavanext)), Layout::llavanext);
    EXPECT_EQ(parse_layout("videochatgpt"), Layout::videochatgpt);
    EXPECT_THROW(parse_layout("clip"), InvalidInput);
}
