// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace stlite {

/**
 * @brief Every knob of one compression run.
 *
 * `beta` is the kept fraction, `delta` the observation window length. The CSS/TSG switches
 * produce the ablation variants; `normalize_terms` min-max scales the attention prior and the
 * saliency term before they are summed. `pool_votes` max-pools the attention vote map with a
 * width-7 kernel before ranking. `protect_window` keeps the window tokens unconditionally.
 */
struct BudgetConfig {
    double beta = 0.2;
    std::size_t delta = 32;
    bool enable_css = true;
    bool enable_tsg = true;
    bool normalize_terms = false;
    bool pool_votes = false;
    bool protect_window = true;
    std::uint64_t seed = 0;

    /// Throws ValidationError when beta is outside (0, 1] or delta is zero.
    void validate() const;

    /// floor(beta * L) clamped to [1, L]. Zero only for L == 0.
    std::size_t budget_for(std::size_t seq_len) const noexcept;
};

inline constexpr std::size_t kVotePoolKernel = 7;

/// Full per-token scoring ledger of one compression run.
struct TokenScores {
    std::vector<double> a_base;
    std::vector<double> phi_space;            // 0 for text tokens
    std::vector<std::optional<double>> rho;   // set only for historical visual tokens
    std::vector<std::uint8_t> m_time;         // 1 = retain
    std::vector<double> s_final;

    friend bool operator==(const TokenScores&, const TokenScores&) = default;
};

struct EvictionResult {
    std::vector<std::size_t> kept_indices;  // strictly increasing
    std::optional<double> tau_red;          // nullopt = retain-all (gate inactive)
    TokenScores scores;
    std::size_t budget = 0;
    std::size_t seq_len = 0;

    friend bool operator==(const EvictionResult&, const EvictionResult&) = default;
};

}  // namespace stlite
