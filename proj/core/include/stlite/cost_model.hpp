// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stlite {

struct CostEstimate {
    double decode_flops_full = 0.0;
    double decode_flops_comp = 0.0;
    double flops_ratio = 1.0;
    std::uint64_t kv_bytes_full = 0;
    std::uint64_t kv_bytes_comp = 0;
};

/**
 * Attention cost of `decode_steps` decoding steps over a cache that starts at `seq` tokens and
 * grows by one per step: QK^T and AV each cost 2 * heads * head_dim * seq FLOPs per step.
 * KV bytes are f32 keys plus values at the starting length.
 */
CostEstimate analytic_cost(std::uint64_t seq_full, std::uint64_t seq_comp, std::uint64_t decode_steps,
                           std::uint64_t head_dim, std::uint64_t num_heads);

/// One row of measured latencies (milliseconds) for a full and a compressed cache.
struct LatencyEntry {
    std::uint32_t screenshots = 0;
    double prefill_full = 0.0;
    double prefill_comp = 0.0;
    double decode_full = 0.0;
    double decode_comp = 0.0;

    /// Throws ValidationError unless every latency is finite and strictly positive.
    void validate() const;
};

struct SpeedupRow {
    std::uint32_t screenshots = 0;
    double prefill_speedup = 0.0;
    double decode_speedup = 0.0;
    double e2e_speedup = 0.0;
};

std::vector<SpeedupRow> speedup_report(std::span<const LatencyEntry> entries);

/// Half-away-from-zero rounding to two decimals, as printed in reports.
double round2(double x) noexcept;

/// Parses {"entries": [{screenshots, prefill_full, prefill_comp, decode_full, decode_comp}]}.
/// A missing or non-numeric field raises ValidationError naming it.
std::vector<LatencyEntry> parse_latency_json(std::string_view text);

std::string format_speedup_table(std::span<const SpeedupRow> rows);

}  // namespace stlite
