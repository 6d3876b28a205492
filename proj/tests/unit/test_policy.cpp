// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "stlite/error.hpp"
#include "stlite/policy.hpp"
#include "stlite/scoring.hpp"
#include "stlite/simulator.hpp"
#include "test_support.hpp"

namespace stlite {
namespace {

std::vector<std::size_t> iota_n(std::size_t n, std::size_t from = 0) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = from + i;
    return v;
}

// L text tokens with random keys, d = 4.
LayerCache text_cache(std::mt19937_64& rng, std::size_t L, std::size_t heads = 1) {
    std::normal_distribution<float> g;
    std::vector<Matrix> k, v;
    for (std::size_t h = 0; h < heads; ++h) {
        std::vector<float> kd(L * 4), vd(L * 4);
        for (float& x : kd) x = g(rng);
        for (float& x : vd) x = g(rng);
        k.emplace_back(L, 4, kd);
        v.emplace_back(L, 4, vd);
    }
    return LayerCache(0, k, v, std::vector<TokenMeta>(L, TokenMeta::text(0)), {});
}

TEST(TopB, Examples) {
    EXPECT_EQ(top_b_select(std::vector<double>{3, 1, 2}, 2), (std::vector<std::size_t>{0, 2}));
    EXPECT_EQ(top_b_select(std::vector<double>{1, 1, 1}, 2), (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(top_b_select(std::vector<double>{1, 1, 1}, 10), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Policy, NamesRoundTrip) {
    for (auto k : all_policies()) EXPECT_EQ(parse_policy(to_string(k)), k);
    EXPECT_FALSE(parse_policy("h2o").has_value());
}

TEST(StLite, BudgetAndIdentityAtFullBudget) {
    std::mt19937_64 rng(1);
    const auto c = text_cache(rng, 100);
    BudgetConfig cfg;
    EXPECT_EQ(st_lite_compress(c, cfg).kept_indices.size(), 20u);
    cfg.beta = 1.0;
    for (auto kind : all_policies()) {
        const auto r = compress_layer(kind, c, cfg);
        EXPECT_EQ(r.kept_indices, iota_n(100)) << to_string(kind);
        EXPECT_EQ(apply_eviction(c, r), c);
    }
}

TEST(StLite, RejectsBadInputs) {
    std::mt19937_64 rng(1);
    const auto c = text_cache(rng, 10);
    BudgetConfig cfg;
    cfg.delta = 11;
    EXPECT_THROW(st_lite_compress(c, cfg), ValidationError);
    cfg.delta = 4;
    cfg.beta = 0.0;
    EXPECT_THROW(st_lite_compress(c, cfg), ValidationError);
    cfg.beta = 1.5;
    EXPECT_THROW(snapkv_compress(c, cfg), ValidationError);
}

TEST(StLite, WindowTruncatedWhenBudgetIsSmall) {
    std::mt19937_64 rng(2);
    const auto c = text_cache(rng, 50);
    BudgetConfig cfg;
    cfg.beta = 0.1;
    cfg.delta = 8;
    EXPECT_EQ(st_lite_compress(c, cfg).kept_indices, iota_n(5, 45));
}

TEST(StLite, DuplicateHistoricalFrameIsGatedOut) {
    // Frame 0 is unique, frame 1 is repeated verbatim by the current frame 2.
    const auto stream = generate_stream(StreamScenario::duplicated_frame_scenario());
    BudgetConfig cfg;
    cfg.beta = 0.25;  // L = 224, B = 56, window 32
    const auto r = st_lite_compress(stream.cache, cfg);
    ASSERT_TRUE(r.tau_red.has_value());
    EXPECT_LT(*r.tau_red, 1.0);
    for (std::size_t i = 64; i < 128; ++i) {
        EXPECT_EQ(*r.scores.rho[i], 1.0);
        EXPECT_EQ(r.scores.m_time[i], 0);
        EXPECT_EQ(r.scores.s_final[i], 0.0);
        EXPECT_FALSE(std::binary_search(r.kept_indices.begin(), r.kept_indices.end(), i));
    }
}

TEST(StLite, CssOnlyKeepsComponentBoundary) {
    // One frame: uniform background with a 2x2 component; no text, window of one token.
    StreamScenario s;
    s.num_frames = 1;
    s.text_tokens = 0;
    s.noise_sigma = 0.0;
    s.background = std::vector<float>(s.dim, 0.0f);
    s.background[0] = 1.0f;
    std::vector<float> comp(s.dim, 0.0f);
    comp[1] = 1.0f;
    s.components = {{0, 1, {3, 3, 5, 5}, comp}};
    const auto stream = generate_stream(s);
    BudgetConfig cfg;
    cfg.beta = 8.0 / 64.0;
    cfg.delta = 1;
    const auto r = st_lite_compress(stream.cache, variant_config(PolicyKind::StLiteCssOnly, cfg));
    EXPECT_EQ(r.kept_indices.size(), 8u);
    for (std::size_t b : stream.truth.boundary_token_indices) {
        EXPECT_TRUE(std::binary_search(r.kept_indices.begin(), r.kept_indices.end(), b)) << b;
    }
}

TEST(SnapKv, EqualsStLiteWithSwitchesOff) {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 30; ++t) {
        const auto c = testing::random_cache(rng, {});
        BudgetConfig cfg;
        cfg.delta = 1 + rng() % std::min<std::size_t>(c.seq_len(), c.queries().empty() ? c.seq_len() : c.query_len());
        cfg.beta = 0.3;
        BudgetConfig off = cfg;
        off.enable_css = off.enable_tsg = false;
        EXPECT_EQ(snapkv_compress(c, cfg).kept_indices, st_lite_compress(c, off).kept_indices);
    }
}

TEST(SnapKv, IdenticalKeysFillLowestIndices) {
    const std::size_t L = 20;
    const LayerCache c(0, {Matrix(L, 1, std::vector<float>(L, 1.0f))}, {Matrix::zeros(L, 1)},
                       std::vector<TokenMeta>(L, TokenMeta::text(0)), {});
    BudgetConfig cfg;
    cfg.beta = 0.5;
    cfg.delta = 3;
    auto expected = iota_n(7);
    for (std::size_t i = 17; i < 20; ++i) expected.push_back(i);
    EXPECT_EQ(snapkv_compress(c, cfg).kept_indices, expected);
}

TEST(SnapKv, LowAttentionComponentIsLostButStLiteKeepsIt) {
    const auto stream = generate_stream(StreamScenario::low_window_attention_scenario());
    BudgetConfig cfg;
    const auto snap = snapkv_compress(stream.cache, cfg);
    const auto st = st_lite_compress(stream.cache, cfg);
    const auto kept = [](const EvictionResult& r, std::size_t i) {
        return std::binary_search(r.kept_indices.begin(), r.kept_indices.end(), i);
    };
    std::size_t lost_by_snap_kept_by_st = 0;
    for (std::size_t b : stream.truth.boundary_token_indices) {
        if (!kept(snap, b) && kept(st, b)) {
            ++lost_by_snap_kept_by_st;
            EXPECT_GT(st.scores.phi_space[b], st.scores.a_base[b]);
        }
    }
    EXPECT_GT(lost_by_snap_kept_by_st, 0u);
}

TEST(L2Norm, KeepsSmallestNorms) {
    const LayerCache c(0, {Matrix(3, 1, {3, 1, 2})}, {Matrix::zeros(3, 1)}, std::vector<TokenMeta>(3, TokenMeta::text(0)),
                       {});
    BudgetConfig cfg;
    cfg.beta = 1.0 / 3.0;
    cfg.delta = 1;
    cfg.protect_window = false;
    EXPECT_EQ(l2norm_compress(c, cfg).kept_indices, (std::vector<std::size_t>{1}));
    cfg.protect_window = true;
    EXPECT_EQ(l2norm_compress(c, cfg).kept_indices, (std::vector<std::size_t>{2}));
}

TEST(L2Norm, MatchesSortingOracle) {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 20; ++t) {
        const auto c = testing::random_cache(rng, {});
        BudgetConfig cfg;
        cfg.beta = 0.4;
        cfg.delta = 1;
        cfg.protect_window = false;
        std::vector<std::pair<double, std::size_t>> norms;
        for (std::size_t i = 0; i < c.seq_len(); ++i) {
            double s = 0;
            for (const auto& k : c.keys()) {
                double n = 0;
                for (float x : k.row(i)) n += static_cast<double>(x) * x;
                s += std::sqrt(n);
            }
            norms.push_back({s / static_cast<double>(c.num_heads()), i});
        }
        std::stable_sort(norms.begin(), norms.end(), [](auto a, auto b) { return a.first < b.first; });
        std::vector<std::size_t> expected;
        for (std::size_t i = 0; i < cfg.budget_for(c.seq_len()); ++i) expected.push_back(norms[i].second);
        std::sort(expected.begin(), expected.end());
        EXPECT_EQ(l2norm_compress(c, cfg).kept_indices, expected);
    }
}

TEST(Random, DeterministicAndWindowFirst) {
    std::mt19937_64 rng(8);
    const auto c = text_cache(rng, 60);
    BudgetConfig cfg;
    cfg.delta = 5;
    cfg.seed = 42;
    const auto a = random_compress(c, cfg);
    EXPECT_EQ(a, random_compress(c, cfg));
    for (std::size_t i = 55; i < 60; ++i) EXPECT_TRUE(std::binary_search(a.kept_indices.begin(), a.kept_indices.end(), i));
    cfg.beta = 1.0;
    EXPECT_EQ(random_compress(c, cfg).kept_indices, iota_n(60));
}

TEST(Random, InclusionFrequencyIsBinomial) {
    std::mt19937_64 rng(9);
    const auto c = text_cache(rng, 40);
    BudgetConfig cfg;
    cfg.beta = 0.5;
    cfg.delta = 4;
    const std::size_t trials = 10000;
    std::vector<std::size_t> hits(40, 0);
    for (std::size_t s = 0; s < trials; ++s) {
        cfg.seed = s;
        for (std::size_t i : random_compress(c, cfg).kept_indices) ++hits[i];
    }
    const double p = (20.0 - 4.0) / (40.0 - 4.0);
    const double sd = std::sqrt(trials * p * (1 - p));
    for (std::size_t i = 0; i < 36; ++i) EXPECT_NEAR(static_cast<double>(hits[i]), trials * p, 4 * sd) << i;
}

TEST(Pyramid, AllocationExamples) {
    EXPECT_EQ(pyramid_allocate(std::vector<double>{1, 1, 1, 1}, 40), (std::vector<std::size_t>{10, 10, 10, 10}));
    EXPECT_EQ(pyramid_allocate(std::vector<double>{3, 1}, 8), (std::vector<std::size_t>{6, 2}));
    EXPECT_EQ(pyramid_allocate(std::vector<double>{1, 1, 1}, 10), (std::vector<std::size_t>{4, 3, 3}));
    EXPECT_EQ(pyramid_allocate(std::vector<double>{100, 0, 0}, 10), (std::vector<std::size_t>{8, 1, 1}));
    EXPECT_THROW(pyramid_allocate(std::vector<double>{0, 0}, 10), ValidationError);
}

TEST(Pyramid, NearUniformNoiseMovesAtMostOneToken) {
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(-1e-6, 1e-6);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> m(6);
        for (double& x : m) x = 1.0 + u(rng);
        const auto a = pyramid_allocate(m, 100);
        const auto flat = pyramid_allocate(std::vector<double>(6, 1.0), 100);
        for (std::size_t l = 0; l < 6; ++l) {
            EXPECT_LE(std::max(a[l], flat[l]) - std::min(a[l], flat[l]), 1u);
        }
    }
}

TEST(Pyramid, CappedAllocationRespectsCapacity) {
    const std::vector<std::size_t> cap = {3, 50};
    const auto a = pyramid_allocate_capped(std::vector<double>{10, 1}, 20, cap);
    EXPECT_EQ(a, (std::vector<std::size_t>{3, 17}));
}

TEST(Pyramid, SingleLayerEqualsSnapKvAndTotalsAreExact) {
    std::mt19937_64 rng(12);
    testing::RandomCacheOptions o;
    o.query_prob = 0.0;
    for (int t = 0; t < 20; ++t) {
        const auto c = testing::random_cache(rng, o);
        BudgetConfig cfg;
        cfg.delta = 1 + rng() % c.seq_len();
        EXPECT_EQ(compress_layer(PolicyKind::PyramidKv, c, cfg).kept_indices, snapkv_compress(c, cfg).kept_indices);
        std::vector<LayerCache> layers = {c, testing::random_cache(rng, o, 1), testing::random_cache(rng, o, 2)};
        cfg.delta = 1;
        const auto rs = pyramid_compress(layers, cfg);
        std::size_t kept = 0, expected = 0;
        for (std::size_t l = 0; l < 3; ++l) {
            kept += rs[l].kept_indices.size();
            expected += cfg.budget_for(layers[l].seq_len());
            EXPECT_GE(rs[l].kept_indices.size(), 1u);
            EXPECT_LE(rs[l].kept_indices.size(), layers[l].seq_len());
        }
        EXPECT_EQ(kept, expected);
    }
}

TEST(Pyramid, IdenticalLayersGetIdenticalSelections) {
    std::mt19937_64 rng(14);
    const auto c = text_cache(rng, 64);
    const LayerCache c1(1, c.keys(), c.values(), c.meta(), c.layouts());
    BudgetConfig cfg;
    cfg.delta = 8;
    const std::vector<LayerCache> layers = {c, c1};
    const auto rs = pyramid_compress(layers, cfg);
    EXPECT_EQ(rs[0].kept_indices, rs[1].kept_indices);
}

TEST(Policy, ParallelLayersMatchSequential) {
    std::mt19937_64 rng(15);
    testing::RandomCacheOptions o;
    o.query_prob = 0.0;
    std::vector<LayerCache> layers;
    for (std::uint32_t l = 0; l < 6; ++l) layers.push_back(testing::random_cache(rng, o, l));
    BudgetConfig cfg;
    cfg.delta = 2;
    cfg.seed = 5;
    for (auto kind : all_policies()) {
        const auto seq = compress_layers(kind, layers, cfg, 1);
        const auto par = compress_layers(kind, layers, cfg, 4);
        EXPECT_EQ(seq, par) << to_string(kind);
    }
}

TEST(Policy, CompressedAttentionIsRestrictedRenormalization) {
    std::mt19937_64 rng(16);
    testing::RandomCacheOptions o;
    o.query_prob = 1.0;
    o.min_query_rows = 4;
    const auto c = testing::random_cache(rng, o);
    BudgetConfig cfg;
    cfg.delta = 4;
    cfg.beta = 0.5;
    const auto r = st_lite_compress(c, cfg);
    const auto small = apply_eviction(c, r);
    for (std::size_t h = 0; h < c.num_heads(); ++h) {
        const auto full = base_attention_prior(c.keys()[h], AttentionWindow(c.queries()[h].tail_rows(1)));
        const auto comp = base_attention_prior(small.keys()[h], AttentionWindow(small.queries()[h].tail_rows(1)));
        double z = 0;
        for (std::size_t i : r.kept_indices) z += full[i];
        for (std::size_t j = 0; j < r.kept_indices.size(); ++j) EXPECT_NEAR(comp[j], full[r.kept_indices[j]] / z, 1e-9);
    }
}

TEST(Policy, KeyScalingLeavesCssAndGateUnchanged) {
    std::mt19937_64 rng(17);
    for (int t = 0; t < 20; ++t) {
        const auto c = testing::random_cache(rng, {});
        std::vector<Matrix> scaled;
        for (const auto& k : c.keys()) {
            std::vector<float> d(k.data().begin(), k.data().end());
            for (float& x : d) x *= 4.0f;
            scaled.emplace_back(k.rows(), k.cols(), d);
        }
        const LayerCache s(0, scaled, c.values(), c.meta(), c.layouts(), c.queries());
        BudgetConfig cfg;
        cfg.delta = 1;
        const auto a = st_lite_compress(c, cfg), b = st_lite_compress(s, cfg);
        EXPECT_EQ(a.scores.m_time, b.scores.m_time);
        for (std::size_t i = 0; i < c.seq_len(); ++i) EXPECT_NEAR(a.scores.phi_space[i], b.scores.phi_space[i], 1e-6);
    }
}

}  // namespace
}  // namespace stlite
