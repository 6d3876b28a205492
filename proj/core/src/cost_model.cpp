// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#include "stlite/cost_model.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "json.hpp"
#include "stlite/error.hpp"

namespace stlite {

namespace {

// Sum over steps t = 0..steps-1 of (seq + t), kept exact in integers.
std::uint64_t growing_length_sum(std::uint64_t seq, std::uint64_t steps) {
    return steps * seq + steps * (steps == 0 ? 0 : steps - 1) / 2;
}

double field_number(const nlohmann::json& entry, const char* name, std::size_t index) {
    const std::string where = "entries[" + std::to_string(index) + "]." + name;
    const auto it = entry.find(name);
    if (it == entry.end()) throw ValidationError("latency: missing field " + where);
    if (!it->is_number()) throw ValidationError("latency: field " + where + " must be a number");
    return it->get<double>();
}

}  // namespace

CostEstimate analytic_cost(std::uint64_t seq_full, std::uint64_t seq_comp, std::uint64_t decode_steps,
                           std::uint64_t head_dim, std::uint64_t num_heads) {
    if (seq_full == 0 || seq_comp == 0 || decode_steps == 0 || head_dim == 0 || num_heads == 0) {
        throw ValidationError("cost: counts must be positive");
    }
    if (seq_comp > seq_full) throw ValidationError("cost: compressed length exceeds full length");
    const std::uint64_t per_token = 4 * num_heads * head_dim;
    CostEstimate c;
    c.decode_flops_full = static_cast<double>(per_token * growing_length_sum(seq_full, decode_steps));
    c.decode_flops_comp = static_cast<double>(per_token * growing_length_sum(seq_comp, decode_steps));
    c.flops_ratio = c.decode_flops_full / c.decode_flops_comp;
    c.kv_bytes_full = 2 * num_heads * head_dim * seq_full * sizeof(float);
    c.kv_bytes_comp = 2 * num_heads * head_dim * seq_comp * sizeof(float);
    return c;
}

void LatencyEntry::validate() const {
    for (double v : {prefill_full, prefill_comp, decode_full, decode_comp}) {
        if (!std::isfinite(v) || v <= 0.0) {
            throw ValidationError("latency: entry for " + std::to_string(screenshots) +
                                  " screenshots has a non-positive or non-finite latency");
        }
    }
}

std::vector<SpeedupRow> speedup_report(std::span<const LatencyEntry> entries) {
    std::vector<SpeedupRow> rows;
    rows.reserve(entries.size());
    for (const auto& e : entries) {
        e.validate();
        rows.push_back({e.screenshots, e.prefill_full / e.prefill_comp, e.decode_full / e.decode_comp,
                        (e.prefill_full + e.decode_full) / (e.prefill_comp + e.decode_comp)});
    }
    return rows;
}

double round2(double x) noexcept { return std::round(x * 100.0) / 100.0; }

std::vector<LatencyEntry> parse_latency_json(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string("latency: malformed JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("entries") || !doc["entries"].is_array()) {
        throw ValidationError("latency: expected an object with an \"entries\" array");
    }
    std::vector<LatencyEntry> out;
    const auto& entries = doc["entries"];
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (!e.is_object()) throw ValidationError("latency: entries[" + std::to_string(i) + "] is not an object");
        const double shots = field_number(e, "screenshots", i);
        if (shots < 0.0 || shots != std::floor(shots)) {
            throw ValidationError("latency: entries[" + std::to_string(i) + "].screenshots must be a count");
        }
        LatencyEntry entry{static_cast<std::uint32_t>(shots), field_number(e, "prefill_full", i),
                           field_number(e, "prefill_comp", i), field_number(e, "decode_full", i),
                           field_number(e, "decode_comp", i)};
        entry.validate();
        out.push_back(entry);
    }
    return out;
}

std::string format_speedup_table(std::span<const SpeedupRow> rows) {
    std::string out = "screenshots  prefill  decode  e2e\n";
    char line[96];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%11u  %7.2f  %6.2f  %4.2f\n", r.screenshots, round2(r.prefill_speedup),
                      round2(r.decode_speedup), round2(r.e2e_speedup));
        out += line;
    }
    return out;
}

}  // namespace stlite
