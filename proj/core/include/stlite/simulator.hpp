// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stlite/cache.hpp"
#include "stlite/policy.hpp"
#include "stlite/types.hpp"

namespace stlite {

/// Half-open grid rectangle: rows [u0, u1), columns [v0, v1).
struct Rect {
    std::uint32_t u0 = 0, v0 = 0, u1 = 0, v1 = 0;
    bool contains(std::uint32_t u, std::uint32_t v) const noexcept {
        return u >= u0 && u < u1 && v >= v0 && v < v1;
    }
    friend bool operator==(const Rect&, const Rect&) = default;
};

/// A UI element drawn with one vector over `rect` on frames [frame_begin, frame_end).
struct Component {
    std::uint32_t frame_begin = 0;
    std::uint32_t frame_end = 0;
    Rect rect;
    std::vector<float> vector;
    friend bool operator==(const Component&, const Component&) = default;
};

/// From `frame_index` on, `rect` shows new content (`vector`, or a seeded random vector when
/// empty) under any components.
struct RegionChange {
    std::uint32_t frame_index = 0;
    Rect rect;
    std::vector<float> vector;
    friend bool operator==(const RegionChange&, const RegionChange&) = default;
};

/**
 * @brief Synthetic GUI trajectory: a sequence of screenshots over a fixed patch grid followed by
 * a block of instruction text tokens whose queries form the observation window.
 *
 * A cell whose content is unchanged from the previous frame is copied verbatim (same key,
 * value and noise), so it is an exact duplicate of its predecessor.
 */
struct StreamScenario {
    std::uint32_t num_frames = 5;
    std::uint32_t grid_rows = 8;
    std::uint32_t grid_cols = 8;
    std::uint32_t dim = 16;
    std::uint32_t num_heads = 2;
    std::uint32_t text_tokens = 32;
    std::uint32_t decode_steps = 16;
    std::vector<float> background;
    std::vector<Component> components;
    std::vector<RegionChange> change_schedule;
    std::vector<float> query_vector;  // window query direction; empty = mean current component
    double noise_sigma = 0.01;
    std::uint64_t seed = 0;

    /// Throws ValidationError on out-of-bounds rects/frames or vector sizes different from dim.
    void validate() const;

    /// 8x8 grid, 5 frames, 3 components, sigma 0.01, seed 0.
    static StreamScenario default_scenario();

    /// 3 frames: a unique first frame, then a frame the current frame repeats verbatim.
    static StreamScenario duplicated_frame_scenario();

    /// Default layout with window queries aimed at the background, so component tokens draw
    /// little window attention.
    static StreamScenario low_window_attention_scenario();

    friend bool operator==(const StreamScenario&, const StreamScenario&) = default;
};

StreamScenario scenario_from_json(std::string_view text);
std::string scenario_to_json(const StreamScenario& scenario);

/// Oracle labels, as sorted token indices.
struct GroundTruth {
    std::vector<std::size_t> component_token_indices;  // current-frame cells inside a component
    std::vector<std::size_t> boundary_token_indices;   // ...with a background Moore neighbour
    std::vector<std::size_t> redundant_token_indices;  // historical copies of a current-frame cell
};

struct SimulatedStream {
    LayerCache cache;
    GroundTruth truth;
};

SimulatedStream generate_stream(const StreamScenario& scenario);

/// `num_layers` replicas of the stream with independent noise (layer l uses seed + l).
std::vector<LayerCache> generate_layers(const StreamScenario& scenario, std::size_t num_layers);

struct RetentionMetrics {
    double boundary_recall = 1.0;
    double redundancy_eviction_rate = 0.0;
    double kept_fraction = 1.0;
};

RetentionMetrics retention_metrics(const EvictionResult& result, const GroundTruth& truth);

struct ReportRow {
    PolicyKind policy = PolicyKind::StLite;
    double beta = 1.0;
    std::size_t seq_len = 0;
    std::size_t kept = 0;
    double boundary_recall = 1.0;
    double redundancy_eviction_rate = 0.0;
    double kept_fraction = 1.0;
    double flops_ratio = 1.0;
};

/// One row per (policy, beta), policies outermost. `base` supplies delta, switches and seed.
std::vector<ReportRow> run_experiment(const StreamScenario& scenario, std::span<const PolicyKind> policies,
                                      std::span<const double> betas, const BudgetConfig& base = {});

std::string report_row_json(const ReportRow& row);
std::string format_report_table(std::span<const ReportRow> rows);

}  // namespace stlite
