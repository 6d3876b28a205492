// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "stlite/cache.hpp"
#include "stlite/matrix.hpp"
#include "stlite/types.hpp"

namespace stlite {

/// Query rows of the observation window and the logit scale (1/sqrt(d) by default).
struct AttentionWindow {
    Matrix queries;
    double scale = 1.0;

    explicit AttentionWindow(Matrix q);
    AttentionWindow(Matrix q, double s);
};

/// Norms below this are treated as zero vectors; their cosine with anything is 0.
inline constexpr double kZeroNormEpsilon = 1e-12;

double cosine(std::span<const float> a, std::span<const float> b) noexcept;

/**
 * Attention mass each key receives from the window: for every query row, softmax over all L
 * keys of scale * q.k, summed over the rows. Total mass equals the number of window rows.
 */
std::vector<double> base_attention_prior(const Matrix& keys, const AttentionWindow& window);

/// Observation window of a layer: the trailing `delta` stored queries of each head, or the
/// keys of the trailing `delta` positions when the cache stores no queries.
std::vector<AttentionWindow> observation_windows(const LayerCache& cache, std::size_t delta);

/// Base prior averaged over heads.
std::vector<double> layer_attention_prior(const LayerCache& cache, std::size_t delta);

/// Window attention rows (delta x L), each a softmax over all keys, averaged over heads.
/// This is the map the sparsity diagnostics profile.
Matrix window_attention_map(const LayerCache& cache, std::size_t delta);

/// Centered running max over `kernel` neighbours (clipped at the sequence ends).
std::vector<double> max_pool_votes(std::span<const double> votes, std::size_t kernel);

struct SaliencyGrid {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> uniformity;  // H, row-major
    std::vector<double> saliency;    // Phi = 1 - H
};

/**
 * Local uniformity (mean cosine to the existing Moore neighbours) and its complement for one
 * frame. `cells` is rows*cols x d in row-major grid order. Border cells average over their
 * 3 or 5 neighbours; a cell without neighbours gets H = 1.
 */
SaliencyGrid local_uniformity_and_saliency(const Matrix& cells, std::size_t rows, std::size_t cols);

/// Same, for a partially populated grid: `present[k]` says whether cell k exists. Absent cells
/// neither receive scores nor count as neighbours.
SaliencyGrid local_uniformity_and_saliency(const Matrix& cells, std::size_t rows, std::size_t cols,
                                           std::span<const std::uint8_t> present);

/// Max cosine of each historical row against the current-frame rows.
std::vector<double> trajectory_redundancy(const Matrix& historical, const Matrix& current);

/// Value of rank `budget_b` (1-based) in ascending order; max(rho) when budget_b >= |rho|.
double redundancy_threshold(std::span<const double> rho, std::size_t budget_b);

/// 1 where rho <= tau_red, else 0.
std::vector<std::uint8_t> temporal_gate(std::span<const double> rho, double tau_red);

/**
 * Modality-aware score. Text: S = A. Visual: S = M * (A + Phi), with Phi dropped when CSS is
 * off and M forced to 1 when TSG is off. With `normalize_terms`, A and Phi are min-max scaled
 * over the visual tokens first.
 */
std::vector<double> integrate_scores(std::span<const double> a_base, std::span<const double> phi,
                                     std::span<const std::uint8_t> m_time,
                                     std::span<const TokenMeta> meta, const BudgetConfig& config);

}  // namespace stlite
