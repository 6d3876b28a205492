// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "stlite/cache.hpp"
#include "stlite/types.hpp"

namespace stlite {

enum class PolicyKind {
    StLite,
    StLiteCssOnly,
    StLiteTsgOnly,
    SnapKv,
    PyramidKv,
    L2Norm,
    Random,
    FullCache,
};

std::string_view to_string(PolicyKind kind) noexcept;
std::optional<PolicyKind> parse_policy(std::string_view name) noexcept;
std::span<const PolicyKind> all_policies() noexcept;

/// Config of an ablation variant: CssOnly clears the TSG switch, TsgOnly clears the CSS switch.
BudgetConfig variant_config(PolicyKind kind, BudgetConfig config);

/// Indices of the `budget_b` largest scores, ties to the smaller index, returned ascending.
std::vector<std::size_t> top_b_select(std::span<const double> scores, std::size_t budget_b);

/// Number of trailing positions that are always retained for this budget.
std::size_t protected_window(const BudgetConfig& config, std::size_t seq_len, std::size_t budget);

EvictionResult st_lite_compress(const LayerCache& cache, const BudgetConfig& config);
EvictionResult snapkv_compress(const LayerCache& cache, const BudgetConfig& config);
EvictionResult l2norm_compress(const LayerCache& cache, const BudgetConfig& config);
EvictionResult random_compress(const LayerCache& cache, const BudgetConfig& config);
EvictionResult full_cache(const LayerCache& cache, const BudgetConfig& config);

/// Attention-prior selection at an explicit budget (SnapKV scoring, pyramid per-layer step).
EvictionResult snapkv_compress_at(const LayerCache& cache, const BudgetConfig& config,
                                  std::size_t budget);

/**
 * Splits `total_budget` over layers in proportion to `masses` with largest-remainder rounding
 * (ties to the lower layer). Every layer receives at least one token.
 */
std::vector<std::size_t> pyramid_allocate(std::span<const double> masses, std::size_t total_budget);

/// Allocation with per-layer capacity limits; excess is handed to layers with room, by mass.
std::vector<std::size_t> pyramid_allocate_capped(std::span<const double> masses,
                                                 std::size_t total_budget,
                                                 std::span<const std::size_t> capacity);

/// Attention-concentration mass of one layer: tokens whose prior exceeds the uniform level.
double concentration_mass(std::span<const double> a_base, std::size_t window_rows);

std::vector<EvictionResult> pyramid_compress(std::span<const LayerCache> caches,
                                             const BudgetConfig& config);

/// Single-layer dispatch. PyramidKv on one layer reduces to attention-prior selection.
EvictionResult compress_layer(PolicyKind kind, const LayerCache& cache, const BudgetConfig& config);

/// Whole-model dispatch; per-layer policies run on up to `threads` workers (0 = auto).
std::vector<EvictionResult> compress_layers(PolicyKind kind, std::span<const LayerCache> caches,
                                            const BudgetConfig& config, std::size_t threads = 0);

/// Apply a result: keep the selected rows of every head.
LayerCache apply_eviction(const LayerCache& cache, const EvictionResult& result);

}  // namespace stlite
