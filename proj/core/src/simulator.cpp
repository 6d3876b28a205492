// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#include "stlite/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <string>

#include "json.hpp"
#include "stlite/cost_model.hpp"
#include "stlite/error.hpp"
#include "stlite/parallel.hpp"

namespace stlite {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kBackground = -1;
constexpr float kTextKeyScale = 0.5f;

std::vector<float> axis_block(std::uint32_t dim, std::uint32_t first, std::uint32_t count, float value) {
    std::vector<float> v(dim, 0.0f);
    for (std::uint32_t i = first; i < first + count && i < dim; ++i) v[i] = value;
    return v;
}

void check_rect(const Rect& r, const StreamScenario& s, const std::string& where) {
    if (r.u0 >= r.u1 || r.v0 >= r.v1 || r.u1 > s.grid_rows || r.v1 > s.grid_cols) {
        throw ValidationError(where + ": rect [" + std::to_string(r.u0) + "," + std::to_string(r.v0) + ")-[" +
                              std::to_string(r.u1) + "," + std::to_string(r.v1) + ") outside the " +
                              std::to_string(s.grid_rows) + "x" + std::to_string(s.grid_cols) + " grid");
    }
}

void check_vector(const std::vector<float>& v, std::uint32_t dim, const std::string& where, bool allow_empty) {
    if (v.empty() && allow_empty) return;
    if (v.size() != dim) {
        throw ValidationError(where + ": vector has " + std::to_string(v.size()) + " entries, dim is " +
                              std::to_string(dim));
    }
    for (float x : v) {
        if (!std::isfinite(x)) throw ValidationError(where + ": non-finite vector entry");
    }
}

// Which source paints a cell on a frame: a component (its index), a region change
// (components.size() + change index), or the background.
int content_id(const StreamScenario& s, std::uint32_t f, std::uint32_t u, std::uint32_t v) {
    for (std::size_t c = s.components.size(); c-- > 0;) {
        const auto& comp = s.components[c];
        if (f >= comp.frame_begin && f < comp.frame_end && comp.rect.contains(u, v)) return static_cast<int>(c);
    }
    int best = kBackground;
    std::uint32_t best_frame = 0;
    for (std::size_t j = 0; j < s.change_schedule.size(); ++j) {
        const auto& ch = s.change_schedule[j];
        if (ch.frame_index <= f && ch.rect.contains(u, v) && (best == kBackground || ch.frame_index >= best_frame)) {
            best = static_cast<int>(s.components.size() + j);
            best_frame = ch.frame_index;
        }
    }
    return best;
}

bool in_active_component(const StreamScenario& s, std::uint32_t f, std::uint32_t u, std::uint32_t v) {
    return std::any_of(s.components.begin(), s.components.end(), [&](const Component& c) {
        return f >= c.frame_begin && f < c.frame_end && c.rect.contains(u, v);
    });
}

Rect rect_from_json(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 4) throw ValidationError(where + ": rect must be [u0, v0, u1, v1]");
    return {j[0].get<std::uint32_t>(), j[1].get<std::uint32_t>(), j[2].get<std::uint32_t>(),
            j[3].get<std::uint32_t>()};
}

json rect_to_json(const Rect& r) { return json::array({r.u0, r.v0, r.u1, r.v1}); }

}  // namespace

void StreamScenario::validate() const {
    if (num_frames == 0) throw ValidationError("scenario: num_frames must be >= 1");
    if (grid_rows == 0 || grid_cols == 0) throw ValidationError("scenario: grid must be non-empty");
    if (dim == 0) throw ValidationError("scenario: dim must be >= 1");
    if (num_heads == 0) throw ValidationError("scenario: num_heads must be >= 1");
    if (decode_steps == 0) throw ValidationError("scenario: decode_steps must be >= 1");
    if (!std::isfinite(noise_sigma) || noise_sigma < 0.0) {
        throw ValidationError("scenario: noise_sigma must be finite and >= 0");
    }
    check_vector(background, dim, "scenario: background", false);
    check_vector(query_vector, dim, "scenario: query_vector", true);
    for (std::size_t c = 0; c < components.size(); ++c) {
        const auto where = "scenario: components[" + std::to_string(c) + "]";
        const auto& comp = components[c];
        if (comp.frame_begin >= comp.frame_end || comp.frame_end > num_frames) {
            throw ValidationError(where + ": frame range [" + std::to_string(comp.frame_begin) + ", " +
                                  std::to_string(comp.frame_end) + ") outside [0, " + std::to_string(num_frames) +
                                  ")");
        }
        check_rect(comp.rect, *this, where);
        check_vector(comp.vector, dim, where, false);
    }
    for (std::size_t j = 0; j < change_schedule.size(); ++j) {
        const auto where = "scenario: change_schedule[" + std::to_string(j) + "]";
        if (change_schedule[j].frame_index >= num_frames) throw ValidationError(where + ": frame_index out of range");
        check_rect(change_schedule[j].rect, *this, where);
        check_vector(change_schedule[j].vector, dim, where, true);
    }
}

StreamScenario StreamScenario::default_scenario() {
    StreamScenario s;
    s.background = axis_block(s.dim, 0, 4, 1.0f);
    s.components = {
        {0, 5, {1, 1, 4, 5}, axis_block(s.dim, 4, 4, 1.0f)},
        {3, 5, {5, 5, 8, 8}, axis_block(s.dim, 8, 4, 1.0f)},
        {1, 5, {5, 0, 8, 3}, axis_block(s.dim, 12, 4, 1.0f)},
    };
    // Background repaints with a slightly different shade leave unique history behind.
    std::vector<float> shade_a = s.background, shade_b = s.background;
    shade_a[0] = shade_a[2] = 1.2f;
    shade_a[1] = shade_a[3] = 0.8f;
    shade_b[0] = shade_b[1] = 0.8f;
    shade_b[2] = shade_b[3] = 1.2f;
    s.change_schedule = {
        {1, {0, 0, 1, 8}, shade_a},
        {2, {4, 0, 5, 8}, shade_b},
        {3, {0, 0, 1, 8}, shade_b},
        {4, {4, 0, 5, 8}, shade_a},
    };
    return s;
}

StreamScenario StreamScenario::duplicated_frame_scenario() {
    StreamScenario s;
    s.num_frames = 3;
    s.noise_sigma = 0.0;
    s.background = axis_block(s.dim, 0, 4, 1.0f);
    s.components = {
        {0, 1, {0, 0, 4, 4}, axis_block(s.dim, 12, 1, 2.0f)},
        {0, 1, {0, 4, 4, 8}, axis_block(s.dim, 13, 1, 2.0f)},
        {0, 1, {4, 0, 8, 4}, axis_block(s.dim, 14, 1, 2.0f)},
        {0, 1, {4, 4, 8, 8}, axis_block(s.dim, 15, 1, 2.0f)},
        {1, 3, {1, 1, 4, 5}, axis_block(s.dim, 4, 4, 1.0f)},
        {1, 3, {5, 5, 8, 8}, axis_block(s.dim, 8, 4, 1.0f)},
    };
    return s;
}

StreamScenario StreamScenario::low_window_attention_scenario() {
    StreamScenario s = default_scenario();
    s.query_vector = s.background;
    for (float& x : s.query_vector) x *= 3.0f;
    return s;
}

StreamScenario scenario_from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("scenario: malformed JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ValidationError("scenario: expected a JSON object");
    StreamScenario s = StreamScenario::default_scenario();
    try {
        auto take = [&](const char* key, auto& dst) {
            if (doc.contains(key)) dst = doc.at(key).get<std::remove_reference_t<decltype(dst)>>();
        };
        take("num_frames", s.num_frames);
        take("grid_rows", s.grid_rows);
        take("grid_cols", s.grid_cols);
        take("dim", s.dim);
        take("num_heads", s.num_heads);
        take("text_tokens", s.text_tokens);
        take("decode_steps", s.decode_steps);
        take("background", s.background);
        take("query_vector", s.query_vector);
        take("noise_sigma", s.noise_sigma);
        take("seed", s.seed);
        if (doc.contains("components")) {
            s.components.clear();
            for (std::size_t c = 0; c < doc["components"].size(); ++c) {
                const auto& j = doc["components"][c];
                const auto where = "scenario: components[" + std::to_string(c) + "]";
                s.components.push_back({j.at("frame_begin").get<std::uint32_t>(), j.at("frame_end").get<std::uint32_t>(),
                                        rect_from_json(j.at("rect"), where), j.at("vector").get<std::vector<float>>()});
            }
        }
        if (doc.contains("change_schedule")) {
            s.change_schedule.clear();
            for (std::size_t c = 0; c < doc["change_schedule"].size(); ++c) {
                const auto& j = doc["change_schedule"][c];
                const auto where = "scenario: change_schedule[" + std::to_string(c) + "]";
                s.change_schedule.push_back({j.at("frame_index").get<std::uint32_t>(), rect_from_json(j.at("rect"), where),
                                             j.value("vector", std::vector<float>{})});
            }
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("scenario: ") + e.what());
    }
    s.validate();
    return s;
}

std::string scenario_to_json(const StreamScenario& s) {
    ordered_json doc;
    doc["num_frames"] = s.num_frames;
    doc["grid_rows"] = s.grid_rows;
    doc["grid_cols"] = s.grid_cols;
    doc["dim"] = s.dim;
    doc["num_heads"] = s.num_heads;
    doc["text_tokens"] = s.text_tokens;
    doc["decode_steps"] = s.decode_steps;
    doc["noise_sigma"] = s.noise_sigma;
    doc["seed"] = s.seed;
    doc["background"] = s.background;
    doc["query_vector"] = s.query_vector;
    doc["components"] = ordered_json::array();
    for (const auto& c : s.components) {
        doc["components"].push_back({{"frame_begin", c.frame_begin},
                                     {"frame_end", c.frame_end},
                                     {"rect", rect_to_json(c.rect)},
                                     {"vector", c.vector}});
    }
    doc["change_schedule"] = ordered_json::array();
    for (const auto& c : s.change_schedule) {
        doc["change_schedule"].push_back(
            {{"frame_index", c.frame_index}, {"rect", rect_to_json(c.rect)}, {"vector", c.vector}});
    }
    return doc.dump(2) + "\n";
}

SimulatedStream generate_stream(const StreamScenario& s) {
    s.validate();
    const std::size_t d = s.dim;
    const std::size_t H = s.num_heads;
    const std::size_t cells = static_cast<std::size_t>(s.grid_rows) * s.grid_cols;
    const std::size_t visual = cells * s.num_frames;
    const std::size_t L = visual + s.text_tokens;
    const std::uint32_t last = s.num_frames - 1;

    std::mt19937_64 rng(s.seed);
    std::normal_distribution<float> unit(0.0f, 1.0f);
    const auto noise = [&]() { return s.noise_sigma > 0.0 ? static_cast<float>(s.noise_sigma) * unit(rng) : 0.0f; };

    std::vector<std::vector<float>> change_vectors;
    for (const auto& ch : s.change_schedule) {
        if (!ch.vector.empty()) {
            change_vectors.push_back(ch.vector);
            continue;
        }
        std::vector<float> v(d);
        for (float& x : v) x = unit(rng);
        change_vectors.push_back(std::move(v));
    }
    const auto content_vector = [&](int id) -> const std::vector<float>& {
        if (id == kBackground) return s.background;
        const auto c = static_cast<std::size_t>(id);
        return c < s.components.size() ? s.components[c].vector : change_vectors[c - s.components.size()];
    };

    std::vector<std::vector<float>> keys(H, std::vector<float>(L * d));
    std::vector<std::vector<float>> values(H, std::vector<float>(L * d));
    std::vector<TokenMeta> meta;
    meta.reserve(L);
    std::vector<FrameLayout> layouts;
    std::vector<std::size_t> lineage(visual);
    std::size_t next_lineage = 0;

    for (std::uint32_t f = 0; f < s.num_frames; ++f) {
        const std::size_t base = static_cast<std::size_t>(f) * cells;
        layouts.push_back({f, s.grid_rows, s.grid_cols, base, base + cells, false});
        for (std::uint32_t u = 0; u < s.grid_rows; ++u) {
            for (std::uint32_t v = 0; v < s.grid_cols; ++v) {
                const std::size_t t = base + static_cast<std::size_t>(u) * s.grid_cols + v;
                meta.push_back(TokenMeta::visual(f, u, v));
                const int id = content_id(s, f, u, v);
                if (f > 0 && id == content_id(s, f - 1, u, v)) {
                    const std::size_t prev = t - cells;
                    lineage[t] = lineage[prev];
                    for (std::size_t h = 0; h < H; ++h) {
                        std::copy_n(keys[h].begin() + prev * d, d, keys[h].begin() + t * d);
                        std::copy_n(values[h].begin() + prev * d, d, values[h].begin() + t * d);
                    }
                    continue;
                }
                lineage[t] = next_lineage++;
                const auto& content = content_vector(id);
                for (std::size_t h = 0; h < H; ++h) {
                    for (std::size_t k = 0; k < d; ++k) keys[h][t * d + k] = content[k] + noise();
                    for (std::size_t k = 0; k < d; ++k) values[h][t * d + k] = unit(rng);
                }
            }
        }
    }
    for (std::size_t t = visual; t < L; ++t) {
        meta.push_back(TokenMeta::text(last));
        for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t k = 0; k < d; ++k) keys[h][t * d + k] = kTextKeyScale * unit(rng);
            for (std::size_t k = 0; k < d; ++k) values[h][t * d + k] = unit(rng);
        }
    }

    std::vector<float> query_dir = s.query_vector;
    if (query_dir.empty()) {
        query_dir.assign(d, 0.0f);
        std::size_t active = 0;
        for (const auto& c : s.components) {
            if (last < c.frame_begin || last >= c.frame_end) continue;
            for (std::size_t k = 0; k < d; ++k) query_dir[k] += c.vector[k];
            ++active;
        }
        if (active == 0) {
            query_dir = s.background;
        } else {
            for (float& x : query_dir) x /= static_cast<float>(active);
        }
    }
    std::vector<Matrix> queries;
    if (s.text_tokens > 0) {
        for (std::size_t h = 0; h < H; ++h) {
            std::vector<float> q(static_cast<std::size_t>(s.text_tokens) * d);
            for (std::size_t r = 0; r < s.text_tokens; ++r) {
                for (std::size_t k = 0; k < d; ++k) q[r * d + k] = query_dir[k] + noise();
            }
            queries.emplace_back(s.text_tokens, d, std::move(q));
        }
    }

    std::vector<Matrix> key_mats, value_mats;
    for (std::size_t h = 0; h < H; ++h) {
        key_mats.emplace_back(L, d, std::move(keys[h]));
        value_mats.emplace_back(L, d, std::move(values[h]));
    }

    GroundTruth truth;
    const std::size_t current = static_cast<std::size_t>(last) * cells;
    std::set<std::size_t> current_lineages(lineage.begin() + static_cast<std::ptrdiff_t>(current), lineage.end());
    for (std::uint32_t u = 0; u < s.grid_rows; ++u) {
        for (std::uint32_t v = 0; v < s.grid_cols; ++v) {
            if (!in_active_component(s, last, u, v)) continue;
            const std::size_t t = current + static_cast<std::size_t>(u) * s.grid_cols + v;
            truth.component_token_indices.push_back(t);
            bool touches_background = false;
            for (int du = -1; du <= 1 && !touches_background; ++du) {
                for (int dv = -1; dv <= 1; ++dv) {
                    if (du == 0 && dv == 0) continue;
                    const auto nu = static_cast<std::int64_t>(u) + du;
                    const auto nv = static_cast<std::int64_t>(v) + dv;
                    if (nu < 0 || nv < 0 || nu >= s.grid_rows || nv >= s.grid_cols) continue;
                    if (!in_active_component(s, last, static_cast<std::uint32_t>(nu), static_cast<std::uint32_t>(nv))) {
                        touches_background = true;
                        break;
                    }
                }
            }
            if (touches_background) truth.boundary_token_indices.push_back(t);
        }
    }
    for (std::size_t t = 0; t < current; ++t) {
        if (current_lineages.count(lineage[t]) != 0) truth.redundant_token_indices.push_back(t);
    }

    return {LayerCache(0, std::move(key_mats), std::move(value_mats), std::move(meta), std::move(layouts),
                       std::move(queries)),
            std::move(truth)};
}

std::vector<LayerCache> generate_layers(const StreamScenario& scenario, std::size_t num_layers) {
    std::vector<LayerCache> out;
    out.reserve(num_layers);
    for (std::size_t l = 0; l < num_layers; ++l) {
        StreamScenario s = scenario;
        s.seed = scenario.seed + l;
        LayerCache c = generate_stream(s).cache;
        out.emplace_back(static_cast<std::uint32_t>(l), c.keys(), c.values(), c.meta(), c.layouts(), c.queries());
    }
    return out;
}

RetentionMetrics retention_metrics(const EvictionResult& result, const GroundTruth& truth) {
    const auto& kept = result.kept_indices;
    const auto is_kept = [&](std::size_t t) { return std::binary_search(kept.begin(), kept.end(), t); };
    RetentionMetrics m;
    if (!truth.boundary_token_indices.empty()) {
        const auto hit = std::count_if(truth.boundary_token_indices.begin(), truth.boundary_token_indices.end(), is_kept);
        m.boundary_recall = static_cast<double>(hit) / static_cast<double>(truth.boundary_token_indices.size());
    }
    if (!truth.redundant_token_indices.empty()) {
        const auto evicted = std::count_if(truth.redundant_token_indices.begin(), truth.redundant_token_indices.end(),
                                           [&](std::size_t t) { return !is_kept(t); });
        m.redundancy_eviction_rate =
            static_cast<double>(evicted) / static_cast<double>(truth.redundant_token_indices.size());
    }
    m.kept_fraction = result.seq_len == 0 ? 1.0 : static_cast<double>(result.budget) / static_cast<double>(result.seq_len);
    return m;
}

std::vector<ReportRow> run_experiment(const StreamScenario& scenario, std::span<const PolicyKind> policies,
                                      std::span<const double> betas, const BudgetConfig& base) {
    const SimulatedStream stream = generate_stream(scenario);
    const std::size_t L = stream.cache.seq_len();
    std::vector<ReportRow> rows(policies.size() * betas.size());
    parallel_for(rows.size(), [&](std::size_t i) {
        const PolicyKind kind = policies[i / betas.size()];
        BudgetConfig cfg = base;
        cfg.beta = betas[i % betas.size()];
        const EvictionResult r = compress_layer(kind, stream.cache, cfg);
        const RetentionMetrics m = retention_metrics(r, stream.truth);
        const CostEstimate cost = analytic_cost(L, r.kept_indices.size(), scenario.decode_steps, scenario.dim,
                                                scenario.num_heads);
        rows[i] = {kind, cfg.beta, L, r.kept_indices.size(), m.boundary_recall, m.redundancy_eviction_rate,
                   m.kept_fraction, cost.flops_ratio};
    });
    return rows;
}

std::string report_row_json(const ReportRow& row) {
    ordered_json j;
    j["policy"] = std::string(to_string(row.policy));
    j["beta"] = row.beta;
    j["seq_len"] = row.seq_len;
    j["kept"] = row.kept;
    j["boundary_recall"] = row.boundary_recall;
    j["redundancy_eviction_rate"] = row.redundancy_eviction_rate;
    j["kept_fraction"] = row.kept_fraction;
    j["flops_ratio"] = row.flops_ratio;
    return j.dump();
}

std::string format_report_table(std::span<const ReportRow> rows) {
    std::string out = "policy             beta   kept/L    recall  redund_evict  flops_ratio\n";
    char line[128];
    for (const auto& r : rows) {
        const std::string kept = std::to_string(r.kept) + "/" + std::to_string(r.seq_len);
        std::snprintf(line, sizeof line, "%-17s %5.2f %9s %9.3f %13.3f %12.3f\n", std::string(to_string(r.policy)).c_str(),
                      r.beta, kept.c_str(), r.boundary_recall, r.redundancy_eviction_rate, r.flops_ratio);
        out += line;
    }
    return out;
}

}  // namespace stlite
