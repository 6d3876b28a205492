// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#include "test_support.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <unistd.h>

namespace stlite::testing {

namespace fs = std::filesystem;

LayerCache random_cache(std::mt19937_64& rng, const RandomCacheOptions& o, std::uint32_t layer_index) {
    std::uniform_int_distribution<std::size_t> len_dist(o.min_len, o.max_len);
    std::uniform_int_distribution<std::size_t> head_dist(1, o.max_heads);
    std::uniform_int_distribution<std::size_t> dim_dist(1, o.max_dim);
    std::uniform_int_distribution<std::uint32_t> grid_dist(1, o.max_grid);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::normal_distribution<float> gauss(0.0f, 1.0f);

    const std::size_t L = len_dist(rng);
    const std::size_t H = head_dist(rng);
    const std::size_t d = dim_dist(rng);
    const std::uint32_t rows = grid_dist(rng), cols = grid_dist(rng);

    std::vector<TokenMeta> meta;
    std::vector<FrameLayout> layouts;
    // Per cell, the token that last showed it; duplicates copy that token's key.
    std::vector<std::optional<std::size_t>> last_seen(static_cast<std::size_t>(rows) * cols);
    std::vector<std::optional<std::size_t>> copy_of;

    std::uint32_t frame = 0;
    while (meta.size() < L) {
        if (coin(rng) < o.text_gap_prob) {
            const std::size_t run = std::min<std::size_t>(L - meta.size(), 1 + rng() % 3);
            for (std::size_t i = 0; i < run; ++i) {
                meta.push_back(TokenMeta::text(frame));
                copy_of.push_back(std::nullopt);
            }
            continue;
        }
        std::vector<std::size_t> cells;
        const bool prune = coin(rng) < o.prune_prob;
        for (std::size_t c = 0; c < last_seen.size(); ++c) {
            if (!prune || coin(rng) < 0.6) cells.push_back(c);
        }
        if (cells.empty()) cells.push_back(rng() % last_seen.size());
        if (meta.size() + cells.size() > L) break;
        const bool pruned = cells.size() != last_seen.size();
        const std::size_t start = meta.size();
        for (std::size_t c : cells) {
            const std::size_t t = meta.size();
            meta.push_back(TokenMeta::visual(frame, static_cast<std::uint32_t>(c / cols),
                                             static_cast<std::uint32_t>(c % cols)));
            copy_of.push_back(last_seen[c] && coin(rng) < o.duplicate_prob ? last_seen[c] : std::nullopt);
            last_seen[c] = t;
        }
        layouts.push_back({frame, rows, cols, start, meta.size(), pruned});
        ++frame;
    }
    while (meta.size() < L) {
        meta.push_back(TokenMeta::text(frame == 0 ? 0 : frame - 1));
        copy_of.push_back(std::nullopt);
    }

    std::vector<std::vector<float>> keys(H, std::vector<float>(L * d)), values(H, std::vector<float>(L * d));
    for (std::size_t t = 0; t < L; ++t) {
        const bool zero = meta[t].is_visual() && !copy_of[t] && coin(rng) < o.zero_prob;
        for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t k = 0; k < d; ++k) {
                keys[h][t * d + k] = copy_of[t] ? keys[h][*copy_of[t] * d + k] : (zero ? 0.0f : gauss(rng));
                values[h][t * d + k] = gauss(rng);
            }
        }
    }
    std::vector<Matrix> key_mats, value_mats, queries;
    for (std::size_t h = 0; h < H; ++h) {
        key_mats.emplace_back(L, d, std::move(keys[h]));
        value_mats.emplace_back(L, d, std::move(values[h]));
    }
    if (coin(rng) < o.query_prob) {
        const std::size_t lo = std::min(std::max<std::size_t>(o.min_query_rows, 1), L);
        const std::size_t q = std::uniform_int_distribution<std::size_t>(lo, L)(rng);
        for (std::size_t h = 0; h < H; ++h) {
            std::vector<float> data(q * d);
            for (float& x : data) x = gauss(rng);
            queries.emplace_back(q, d, std::move(data));
        }
    }
    return LayerCache(layer_index, std::move(key_mats), std::move(value_mats), std::move(meta), std::move(layouts),
                      std::move(queries));
}

namespace {

constexpr long double kTieSlack = 1e-12L;

long double cos_ld(const std::vector<long double>& a, const std::vector<long double>& b) {
    long double dot = 0, na = 0, nb = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    if (std::sqrt(na) < 1e-12L || std::sqrt(nb) < 1e-12L) return 0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0L, 1.0L);  // |cos| <= 1 exactly
}

}  // namespace

OracleResult oracle_st_lite(const LayerCache& cache, const BudgetConfig& cfg) {
    const std::size_t L = cache.seq_len();
    const std::size_t H = cache.num_heads();
    const std::size_t d = cache.head_dim();
    const auto& meta = cache.meta();

    std::size_t B = static_cast<std::size_t>(std::floor(cfg.beta * static_cast<double>(L)));
    B = std::clamp<std::size_t>(B, 1, L);
    const std::size_t w = cfg.protect_window ? std::min({cfg.delta, B, L}) : 0;

    OracleResult r;
    r.a_base.assign(L, 0);
    for (std::size_t h = 0; h < H; ++h) {
        const Matrix& K = cache.keys()[h];
        const bool stored = !cache.queries().empty();
        const Matrix& Qsrc = stored ? cache.queries()[h] : K;
        for (std::size_t j = 0; j < cfg.delta; ++j) {
            const std::size_t qrow = Qsrc.rows() - cfg.delta + j;
            std::vector<long double> e(L);
            long double z = 0;
            for (std::size_t i = 0; i < L; ++i) {
                long double s = 0;
                for (std::size_t k = 0; k < d; ++k) s += static_cast<long double>(Qsrc(qrow, k)) * K(i, k);
                e[i] = std::exp(s / std::sqrt(static_cast<long double>(d)));
                z += e[i];
            }
            for (std::size_t i = 0; i < L; ++i) r.a_base[i] += e[i] / z / static_cast<long double>(H);
        }
    }

    std::vector<std::vector<long double>> vec(L, std::vector<long double>(d, 0));
    for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t k = 0; k < d; ++k) {
            for (std::size_t h = 0; h < H; ++h) vec[i][k] += cache.keys()[h](i, k);
            vec[i][k] /= static_cast<long double>(H);
        }
    }

    r.phi.assign(L, 0);
    if (cfg.enable_css) {
        for (const auto& lay : cache.layouts()) {
            for (std::size_t t = lay.span_start; t < lay.span_end; ++t) {
                const auto c = *meta[t].grid;
                long double sum = 0;
                int n = 0;
                for (std::size_t s = lay.span_start; s < lay.span_end; ++s) {
                    if (s == t) continue;
                    const auto o = *meta[s].grid;
                    const long du = static_cast<long>(o.u) - static_cast<long>(c.u);
                    const long dv = static_cast<long>(o.v) - static_cast<long>(c.v);
                    if (std::labs(du) <= 1 && std::labs(dv) <= 1) {
                        sum += cos_ld(vec[t], vec[s]);
                        ++n;
                    }
                }
                r.phi[t] = 1 - (n ? sum / n : 1);
            }
        }
    }

    r.rho.assign(L, std::nullopt);
    r.m_time.assign(L, 1);
    if (cfg.enable_tsg) {
        std::optional<std::uint32_t> cur;
        for (const auto& m : meta) {
            if (m.is_visual()) cur = std::max(cur.value_or(0), m.frame_index);
        }
        std::vector<long double> all_rho;
        if (cur) {
            for (std::size_t i = 0; i < L; ++i) {
                if (!meta[i].is_visual() || meta[i].frame_index >= *cur) continue;
                long double best = -std::numeric_limits<long double>::infinity();
                for (std::size_t j = 0; j < L; ++j) {
                    if (meta[j].is_visual() && meta[j].frame_index == *cur) best = std::max(best, cos_ld(vec[i], vec[j]));
                }
                r.rho[i] = best;
                all_rho.push_back(best);
            }
        }
        if (!all_rho.empty()) {
            std::sort(all_rho.begin(), all_rho.end());
            const std::size_t rank = std::max<std::size_t>(1, B - w);
            r.tau = all_rho[std::min(rank, all_rho.size()) - 1];
            for (std::size_t i = 0; i < L; ++i) {
                // mathematically equal similarities (parallel copies) may differ by an ulp here
                if (r.rho[i]) r.m_time[i] = *r.rho[i] <= *r.tau + kTieSlack ? 1 : 0;
            }
        }
    }

    // Optional min-max scaling of both terms over the visual tokens.
    auto scaled = [&](const std::vector<long double>& xs) {
        long double lo = std::numeric_limits<long double>::infinity(), hi = -lo;
        for (std::size_t i = 0; i < L; ++i) {
            if (meta[i].is_visual()) lo = std::min(lo, xs[i]), hi = std::max(hi, xs[i]);
        }
        std::vector<long double> out(L, 0);
        for (std::size_t i = 0; i < L; ++i) out[i] = hi > lo ? (xs[i] - lo) / (hi - lo) : 0;
        return out;
    };
    const auto a_term = cfg.normalize_terms ? scaled(r.a_base) : r.a_base;
    const auto p_term = cfg.normalize_terms ? scaled(r.phi) : r.phi;
    r.s_final.assign(L, 0);
    for (std::size_t i = 0; i < L; ++i) {
        r.s_final[i] = meta[i].is_visual() ? r.m_time[i] * (a_term[i] + (cfg.enable_css ? p_term[i] : 0)) : r.a_base[i];
    }

    std::vector<long double> rank_score = r.s_final;
    for (std::size_t i = L - w; i < L; ++i) rank_score[i] = std::numeric_limits<long double>::infinity();
    std::vector<std::size_t> order(L);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rank_score[a] > rank_score[b]; });
    r.kept.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(B));
    std::sort(r.kept.begin(), r.kept.end());
    return r;
}

std::size_t expected_budget(unsigned beta_percent, std::size_t seq_len) {
    return std::clamp<std::size_t>(beta_percent * seq_len / 100, 1, seq_len);
}

TempDir::TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    m_path = fs::temp_directory_path() /
             ("stlite-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(m_path);
    fs::create_directories(m_path);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(m_path, ec);
}

std::string read_bytes(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace stlite::testing
