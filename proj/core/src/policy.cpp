// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#include "stlite/policy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "stlite/error.hpp"
#include "stlite/parallel.hpp"
#include "stlite/scoring.hpp"

namespace stlite {

namespace {

constexpr std::array<PolicyKind, 8> kPolicies = {
    PolicyKind::StLite, PolicyKind::StLiteCssOnly, PolicyKind::StLiteTsgOnly, PolicyKind::SnapKv,
    PolicyKind::PyramidKv, PolicyKind::L2Norm, PolicyKind::Random, PolicyKind::FullCache,
};

constexpr double kAlwaysKeep = std::numeric_limits<double>::infinity();

void check_inputs(const LayerCache& cache, const BudgetConfig& config) {
    config.validate();
    const std::string where = "layer " + std::to_string(cache.layer_index()) + ": ";
    if (cache.seq_len() == 0) throw ValidationError(where + "empty cache");
    if (config.delta > cache.seq_len()) {
        throw ValidationError(where + "delta " + std::to_string(config.delta) + " exceeds sequence length " +
                              std::to_string(cache.seq_len()));
    }
}

TokenScores blank_scores(std::size_t L) {
    TokenScores s;
    s.a_base.assign(L, 0.0);
    s.phi_space.assign(L, 0.0);
    s.rho.assign(L, std::nullopt);
    s.m_time.assign(L, 1);
    s.s_final.assign(L, 0.0);
    return s;
}

// Window tokens outrank everything, then Top-B.
std::vector<std::size_t> select_with_window(std::vector<double> ranking, std::size_t window,
                                            std::size_t budget) {
    const std::size_t L = ranking.size();
    for (std::size_t i = L - window; i < L; ++i) ranking[i] = kAlwaysKeep;
    return top_b_select(ranking, budget);
}

std::vector<double> attention_prior(const LayerCache& cache, const BudgetConfig& config) {
    auto a = layer_attention_prior(cache, config.delta);
    if (config.pool_votes) a = max_pool_votes(a, kVotePoolKernel);
    return a;
}

EvictionResult prior_selection(const LayerCache& cache, const BudgetConfig& config, std::size_t budget,
                               std::vector<double> prior) {
    const std::size_t L = cache.seq_len();
    EvictionResult r;
    r.seq_len = L;
    r.budget = budget;
    r.scores = blank_scores(L);
    r.scores.a_base = std::move(prior);
    r.scores.s_final = r.scores.a_base;
    r.kept_indices =
        select_with_window(r.scores.s_final, protected_window(config, L, budget), budget);
    return r;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t layer) noexcept {
    // splitmix64 finalizer over (seed, layer)
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (layer + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

std::string_view to_string(PolicyKind kind) noexcept {
    switch (kind) {
        case PolicyKind::StLite: return "st-lite";
        case PolicyKind::StLiteCssOnly: return "st-lite-css-only";
        case PolicyKind::StLiteTsgOnly: return "st-lite-tsg-only";
        case PolicyKind::SnapKv: return "snapkv";
        case PolicyKind::PyramidKv: return "pyramidkv";
        case PolicyKind::L2Norm: return "l2norm";
        case PolicyKind::Random: return "random";
        case PolicyKind::FullCache: return "full";
    }
    return "unknown";
}

std::optional<PolicyKind> parse_policy(std::string_view name) noexcept {
    for (auto k : kPolicies) {
        if (to_string(k) == name) return k;
    }
    return std::nullopt;
}

std::span<const PolicyKind> all_policies() noexcept { return kPolicies; }

BudgetConfig variant_config(PolicyKind kind, BudgetConfig config) {
    if (kind == PolicyKind::StLiteCssOnly) config.enable_tsg = false;
    if (kind == PolicyKind::StLiteTsgOnly) config.enable_css = false;
    return config;
}

std::vector<std::size_t> top_b_select(std::span<const double> scores, std::size_t budget_b) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (budget_b >= idx.size()) return idx;
    auto better = [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
    };
    auto mid = idx.begin() + static_cast<std::ptrdiff_t>(budget_b);
    std::nth_element(idx.begin(), mid, idx.end(), better);
    idx.resize(budget_b);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::size_t protected_window(const BudgetConfig& config, std::size_t seq_len, std::size_t budget) {
    if (!config.protect_window) return 0;
    return std::min({config.delta, budget, seq_len});
}

EvictionResult st_lite_compress(const LayerCache& cache, const BudgetConfig& config) {
    check_inputs(cache, config);
    const std::size_t L = cache.seq_len();
    const std::size_t B = config.budget_for(L);
    const std::size_t window = protected_window(config, L, B);
    const auto& meta = cache.meta();

    EvictionResult r;
    r.seq_len = L;
    r.budget = B;
    r.scores = blank_scores(L);
    r.scores.a_base = attention_prior(cache, config);

    Matrix vecs;
    if (config.enable_css || config.enable_tsg) vecs = cache.mean_head_keys();

    if (config.enable_css) {
        const std::size_t d = cache.head_dim();
        for (const auto& lay : cache.layouts()) {
            if (lay.span_length() == 0) continue;
            const std::size_t cells = lay.cell_count();
            std::vector<float> grid(cells * d, 0.0f);
            std::vector<std::uint8_t> present(cells, 0);
            for (std::size_t t = lay.span_start; t < lay.span_end; ++t) {
                const std::size_t c = lay.linear(*meta[t].grid);
                auto src = vecs.row(t);
                std::copy(src.begin(), src.end(), grid.begin() + static_cast<std::ptrdiff_t>(c * d));
                present[c] = 1;
            }
            const auto sal = local_uniformity_and_saliency(Matrix(cells, d, std::move(grid)), lay.grid_rows,
                                                           lay.grid_cols, present);
            for (std::size_t t = lay.span_start; t < lay.span_end; ++t) {
                r.scores.phi_space[t] = sal.saliency[lay.linear(*meta[t].grid)];
            }
        }
    }

    if (config.enable_tsg) {
        if (const auto cur = cache.current_frame()) {
            std::vector<std::size_t> hist, now;
            for (std::size_t i = 0; i < L; ++i) {
                if (!meta[i].is_visual()) continue;
                if (meta[i].frame_index < *cur) hist.push_back(i);
                else if (meta[i].frame_index == *cur) now.push_back(i);
            }
            if (!hist.empty()) {
                const auto rho = trajectory_redundancy(vecs.select_rows(hist), vecs.select_rows(now));
                // The gate ranks against the budget left after the always-kept window.
                const std::size_t rank = std::max<std::size_t>(1, B - window);
                const double tau = redundancy_threshold(rho, rank);
                const auto gate = temporal_gate(rho, tau);
                r.tau_red = tau;
                for (std::size_t k = 0; k < hist.size(); ++k) {
                    r.scores.rho[hist[k]] = rho[k];
                    r.scores.m_time[hist[k]] = gate[k];
                }
            }
        }
    }

    r.scores.s_final = integrate_scores(r.scores.a_base, r.scores.phi_space, r.scores.m_time, meta, config);
    r.kept_indices = select_with_window(r.scores.s_final, window, B);
    return r;
}

EvictionResult snapkv_compress_at(const LayerCache& cache, const BudgetConfig& config, std::size_t budget) {
    check_inputs(cache, config);
    budget = std::clamp<std::size_t>(budget, 1, cache.seq_len());
    return prior_selection(cache, config, budget, attention_prior(cache, config));
}

EvictionResult snapkv_compress(const LayerCache& cache, const BudgetConfig& config) {
    check_inputs(cache, config);
    return snapkv_compress_at(cache, config, config.budget_for(cache.seq_len()));
}

EvictionResult l2norm_compress(const LayerCache& cache, const BudgetConfig& config) {
    check_inputs(cache, config);
    const std::size_t L = cache.seq_len();
    const std::size_t B = config.budget_for(L);
    EvictionResult r;
    r.seq_len = L;
    r.budget = B;
    r.scores = blank_scores(L);
    for (const auto& k : cache.keys()) {
        for (std::size_t i = 0; i < L; ++i) {
            double s = 0.0;
            for (float x : k.row(i)) s += static_cast<double>(x) * x;
            r.scores.s_final[i] -= std::sqrt(s);
        }
    }
    for (double& s : r.scores.s_final) s /= static_cast<double>(cache.num_heads());
    r.kept_indices = select_with_window(r.scores.s_final, protected_window(config, L, B), B);
    return r;
}

EvictionResult random_compress(const LayerCache& cache, const BudgetConfig& config) {
    check_inputs(cache, config);
    const std::size_t L = cache.seq_len();
    const std::size_t B = config.budget_for(L);
    const std::size_t window = protected_window(config, L, B);
    EvictionResult r;
    r.seq_len = L;
    r.budget = B;
    r.scores = blank_scores(L);

    std::vector<std::size_t> pool(L - window);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::mt19937_64 rng(mix_seed(config.seed, cache.layer_index()));
    std::vector<std::size_t> kept;
    kept.reserve(B);
    std::sample(pool.begin(), pool.end(), std::back_inserter(kept), B - window, rng);
    for (std::size_t i = L - window; i < L; ++i) kept.push_back(i);
    std::sort(kept.begin(), kept.end());
    for (std::size_t i : kept) r.scores.s_final[i] = 1.0;
    r.kept_indices = std::move(kept);
    return r;
}

EvictionResult full_cache(const LayerCache& cache, const BudgetConfig& config) {
    config.validate();
    const std::size_t L = cache.seq_len();
    EvictionResult r;
    r.seq_len = L;
    r.budget = L;
    r.scores = blank_scores(L);
    r.kept_indices.resize(L);
    std::iota(r.kept_indices.begin(), r.kept_indices.end(), std::size_t{0});
    return r;
}

std::vector<std::size_t> pyramid_allocate(std::span<const double> masses, std::size_t total_budget) {
    const std::size_t n = masses.size();
    if (n == 0) throw ValidationError("pyramid allocate: no layers");
    double sum = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
        if (!(masses[l] >= 0.0) || !std::isfinite(masses[l])) {
            throw ValidationError("pyramid allocate: mass of layer " + std::to_string(l) +
                                  " must be finite and >= 0");
        }
        sum += masses[l];
    }
    if (!(sum > 0.0)) throw ValidationError("pyramid allocate: all-zero masses");
    if (total_budget < n) {
        throw ValidationError("pyramid allocate: total budget " + std::to_string(total_budget) +
                              " is below the layer count " + std::to_string(n));
    }

    std::vector<std::size_t> out(n);
    std::vector<double> frac(n);
    std::size_t assigned = 0;
    for (std::size_t l = 0; l < n; ++l) {
        const double quota = masses[l] / sum * static_cast<double>(total_budget);
        const double fl = std::floor(quota);
        out[l] = static_cast<std::size_t>(fl);
        frac[l] = quota - fl;
        assigned += out[l];
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    // Floating error can push the floors one past the total; trim from the smallest remainders.
    for (std::size_t k = 0; assigned > total_budget; k = (k + 1) % n) {
        const std::size_t l = order[n - 1 - k];
        if (out[l] > 0) {
            --out[l];
            --assigned;
        }
    }
    for (std::size_t k = 0; assigned < total_budget; k = (k + 1) % n) {
        ++out[order[k]];
        ++assigned;
    }
    for (std::size_t l = 0; l < n; ++l) {
        if (out[l] > 0) continue;
        const auto donor = static_cast<std::size_t>(std::max_element(out.begin(), out.end()) - out.begin());
        --out[donor];
        out[l] = 1;
    }
    return out;
}

std::vector<std::size_t> pyramid_allocate_capped(std::span<const double> masses, std::size_t total_budget,
                                                 std::span<const std::size_t> capacity) {
    if (capacity.size() != masses.size()) throw ValidationError("pyramid allocate: capacity size mismatch");
    if (total_budget > std::accumulate(capacity.begin(), capacity.end(), std::size_t{0})) {
        throw ValidationError("pyramid allocate: total budget exceeds total capacity");
    }
    auto out = pyramid_allocate(masses, total_budget);
    std::size_t excess = 0;
    for (std::size_t l = 0; l < out.size(); ++l) {
        if (out[l] > capacity[l]) {
            excess += out[l] - capacity[l];
            out[l] = capacity[l];
        }
    }
    std::vector<std::size_t> order(out.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return masses[a] > masses[b]; });
    for (std::size_t l : order) {
        const std::size_t give = std::min(excess, capacity[l] - out[l]);
        out[l] += give;
        excess -= give;
    }
    return out;
}

double concentration_mass(std::span<const double> a_base, std::size_t window_rows) {
    if (a_base.empty()) return 0.0;
    const double uniform = static_cast<double>(window_rows) / static_cast<double>(a_base.size());
    return static_cast<double>(std::count_if(a_base.begin(), a_base.end(), [&](double a) { return a > uniform; }));
}

std::vector<EvictionResult> pyramid_compress(std::span<const LayerCache> caches, const BudgetConfig& config) {
    if (caches.empty()) throw ValidationError("pyramid compress: at least one layer required");
    const std::size_t n = caches.size();
    std::vector<std::vector<double>> priors(n);
    std::vector<double> masses(n);
    std::vector<std::size_t> capacity(n);
    std::size_t total = 0;
    for (std::size_t l = 0; l < n; ++l) {
        check_inputs(caches[l], config);
        priors[l] = attention_prior(caches[l], config);
        masses[l] = concentration_mass(priors[l], config.delta);
        capacity[l] = caches[l].seq_len();
        total += config.budget_for(capacity[l]);
    }
    if (std::all_of(masses.begin(), masses.end(), [](double m) { return m == 0.0; })) {
        // Flat attention everywhere: no concentration signal, so split evenly.
        std::fill(masses.begin(), masses.end(), 1.0);
    }
    const auto budgets = pyramid_allocate_capped(masses, total, capacity);
    std::vector<EvictionResult> out;
    out.reserve(n);
    for (std::size_t l = 0; l < n; ++l) {
        out.push_back(prior_selection(caches[l], config, budgets[l], std::move(priors[l])));
    }
    return out;
}

EvictionResult compress_layer(PolicyKind kind, const LayerCache& cache, const BudgetConfig& config) {
    switch (kind) {
        case PolicyKind::StLite:
        case PolicyKind::StLiteCssOnly:
        case PolicyKind::StLiteTsgOnly:
            return st_lite_compress(cache, variant_config(kind, config));
        case PolicyKind::SnapKv: return snapkv_compress(cache, config);
        case PolicyKind::PyramidKv: return std::move(pyramid_compress(std::span(&cache, 1), config).front());
        case PolicyKind::L2Norm: return l2norm_compress(cache, config);
        case PolicyKind::Random: return random_compress(cache, config);
        case PolicyKind::FullCache: return full_cache(cache, config);
    }
    throw ValidationError("unknown policy");
}

std::vector<EvictionResult> compress_layers(PolicyKind kind, std::span<const LayerCache> caches,
                                            const BudgetConfig& config, std::size_t threads) {
    if (kind == PolicyKind::PyramidKv) return pyramid_compress(caches, config);
    std::vector<EvictionResult> out(caches.size());
    parallel_for(caches.size(), [&](std::size_t l) { out[l] = compress_layer(kind, caches[l], config); }, threads);
    return out;
}

LayerCache apply_eviction(const LayerCache& cache, const EvictionResult& result) {
    return cache.select(result.kept_indices);
}

}  // namespace stlite
