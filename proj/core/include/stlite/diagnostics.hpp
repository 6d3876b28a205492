// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "stlite/matrix.hpp"

namespace stlite {

inline constexpr double kDefaultCoverage = 0.95;
inline constexpr double kDefaultUniformityEpsilon = 0.05;
inline constexpr double kRowSumTolerance = 1e-4;
inline constexpr double kGapBoundSlack = 1e-9;

struct SparsityProfile {
    std::vector<double> per_layer_sparsity;
    double epsilon = kDefaultUniformityEpsilon;
    bool is_uniform = false;
    double max_layer_step = 0.0;  // max |S(l+1) - S(l)|
};

/**
 * Sparsity of one attention map (rows x L, each row a distribution): 1 - mean(k)/L where k is
 * the smallest number of largest entries covering `coverage` of the row's mass.
 */
double layer_sparsity(const Matrix& attn, double coverage = kDefaultCoverage);

/// Per-layer sparsity and the uniformity verdict max_l |S(l+1) - S(l)| < epsilon.
SparsityProfile sparsity_profile(std::span<const Matrix> attns, double coverage = kDefaultCoverage,
                                 double epsilon = kDefaultUniformityEpsilon);

/// Upper bound 1 / (1 + e^gap) on the attention a token can get when a competitor's logit
/// exceeds its own by `gap`.
double softmax_gap_bound(double delta_gap) noexcept;

struct GapBoundCheck {
    double attn_target = 0.0;
    double bound = 0.0;
    bool holds = false;
};

GapBoundCheck verify_gap_bound(std::span<const double> raw_scores, std::size_t target_index,
                               std::size_t competitor_index);

/// Counts violations over `trials` random logit vectors with lengths in [2, 512].
std::size_t gap_bound_monte_carlo(std::size_t trials, std::uint64_t seed);

/// Violations when the bound is checked on reconstructed logits (log p) of each attention row,
/// with the least-attended key as target and the most-attended key as competitor.
std::size_t gap_bound_violations(const Matrix& attn);

/**
 * Mean absolute per-layer deviation between pyramid allocations of noise-perturbed masses and
 * the uniform allocation. Noise is uniform in [-noise_scale, noise_scale]; negative masses are
 * clamped to zero.
 */
double allocation_chaos(std::span<const double> attn_masses, double noise_scale, std::size_t trials,
                        std::size_t total_budget, std::uint64_t seed = 0);

/// Attention dump: `manifest.json` (kind "attention") plus one rows x L f32 blob per layer.
std::vector<Matrix> load_attention_dump(const std::filesystem::path& dir);
void save_attention_dump(std::span<const Matrix> layers, const std::filesystem::path& dir);

}  // namespace stlite
