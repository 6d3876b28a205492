// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#include "stlite/cache.hpp"

#include <algorithm>
#include <string>

#include "stlite/error.hpp"

namespace stlite {

std::string_view to_string(Modality m) noexcept {
    return m == Modality::Visual ? "visual" : "text";
}

LayerCache::LayerCache(std::uint32_t layer_index, std::vector<Matrix> keys, std::vector<Matrix> values,
                       std::vector<TokenMeta> meta, std::vector<FrameLayout> layouts,
                       std::vector<Matrix> queries)
    : m_layer_index(layer_index),
      m_keys(std::move(keys)),
      m_values(std::move(values)),
      m_queries(std::move(queries)),
      m_meta(std::move(meta)),
      m_layouts(std::move(layouts)) {
    validate();
}

void LayerCache::validate() const {
    const std::string where = "layer " + std::to_string(m_layer_index) + ": ";
    auto fail = [&](const std::string& msg) { throw ValidationError(where + msg); };

    if (m_keys.empty()) fail("num_heads must be >= 1");
    if (m_values.size() != m_keys.size()) {
        fail("values has " + std::to_string(m_values.size()) + " heads, keys has " +
             std::to_string(m_keys.size()));
    }
    const std::size_t L = m_meta.size();
    const std::size_t d = m_keys.front().cols();
    if (d == 0) fail("head_dim must be >= 1");
    for (std::size_t h = 0; h < m_keys.size(); ++h) {
        const auto hs = std::to_string(h);
        if (m_keys[h].rows() != L || m_keys[h].cols() != d) {
            fail("keys[" + hs + "]: shape " + std::to_string(m_keys[h].rows()) + "x" +
                 std::to_string(m_keys[h].cols()) + " != seq_len x head_dim " + std::to_string(L) + "x" +
                 std::to_string(d));
        }
        if (m_values[h].rows() != L || m_values[h].cols() != d) {
            fail("values[" + hs + "]: shape " + std::to_string(m_values[h].rows()) + "x" +
                 std::to_string(m_values[h].cols()) + " != seq_len x head_dim " + std::to_string(L) +
                 "x" + std::to_string(d));
        }
    }
    if (!m_queries.empty()) {
        if (m_queries.size() != m_keys.size()) fail("queries must have one matrix per head");
        const std::size_t w = m_queries.front().rows();
        if (w == 0) fail("queries: at least one row required");
        for (std::size_t h = 0; h < m_queries.size(); ++h) {
            if (m_queries[h].rows() != w || m_queries[h].cols() != d) {
                fail("queries[" + std::to_string(h) + "]: inconsistent shape");
            }
        }
    }

    for (std::size_t i = 0; i < L; ++i) {
        const auto& tm = m_meta[i];
        if (tm.is_visual() != tm.grid.has_value()) {
            fail("token_meta[" + std::to_string(i) + "]: " +
                 (tm.is_visual() ? "visual token without grid coordinate"
                                 : "text token with grid coordinate"));
        }
    }

    std::vector<std::uint8_t> covered(L, 0);
    for (std::size_t f = 0; f < m_layouts.size(); ++f) {
        const auto& lay = m_layouts[f];
        const std::string lw = "layouts[" + std::to_string(f) + "]: ";
        if (lay.grid_rows == 0 || lay.grid_cols == 0) fail(lw + "empty grid");
        if (lay.span_end < lay.span_start || lay.span_end > L) {
            fail(lw + "span [" + std::to_string(lay.span_start) + ", " + std::to_string(lay.span_end) +
                 ") outside sequence of length " + std::to_string(L));
        }
        if (!lay.pruned && lay.span_length() != lay.cell_count()) {
            fail(lw + "span/grid mismatch (grid " + std::to_string(lay.grid_rows) + "x" +
                 std::to_string(lay.grid_cols) + " = " + std::to_string(lay.cell_count()) +
                 " cells, span length " + std::to_string(lay.span_length()) + ")");
        }
        if (lay.pruned && lay.span_length() > lay.cell_count()) {
            fail(lw + "span/grid mismatch (pruned span longer than grid)");
        }
        if (f > 0) {
            const auto& prev = m_layouts[f - 1];
            if (lay.frame_index <= prev.frame_index) fail(lw + "frames not ordered by frame_index");
            if (lay.span_start < prev.span_end) fail(lw + "span overlaps previous frame");
        }
        std::size_t prev_linear = 0;
        for (std::size_t t = lay.span_start; t < lay.span_end; ++t) {
            const auto& tm = m_meta[t];
            const std::string tw = lw + "token " + std::to_string(t) + ": ";
            if (!tm.is_visual()) fail(tw + "text token inside a frame span");
            if (tm.frame_index != lay.frame_index) fail(tw + "frame_index does not match layout");
            const GridCoord c = *tm.grid;
            if (c.u >= lay.grid_rows || c.v >= lay.grid_cols) fail(tw + "grid coordinate outside grid");
            const std::size_t lin = lay.linear(c);
            if (!lay.pruned) {
                if (lin != t - lay.span_start) fail(tw + "grid coordinate not in row-major span order");
            } else if (t > lay.span_start && lin <= prev_linear) {
                fail(tw + "grid coordinates not strictly increasing in row-major order");
            }
            prev_linear = lin;
            covered[t] = 1;
        }
    }
    for (std::size_t i = 0; i < L; ++i) {
        if (m_meta[i].is_visual() && !covered[i]) {
            fail("token_meta[" + std::to_string(i) + "]: visual token not covered by any frame layout");
        }
    }
}

std::optional<std::uint32_t> LayerCache::current_frame() const noexcept {
    std::optional<std::uint32_t> cur;
    for (const auto& lay : m_layouts) {
        if (lay.span_length() > 0 && (!cur || lay.frame_index > *cur)) cur = lay.frame_index;
    }
    return cur;
}

Matrix LayerCache::mean_head_keys() const {
    const std::size_t L = seq_len();
    const std::size_t d = head_dim();
    std::vector<double> acc(L * d, 0.0);
    for (const auto& k : m_keys) {
        auto data = k.data();
        for (std::size_t i = 0; i < data.size(); ++i) acc[i] += data[i];
    }
    const double inv = 1.0 / static_cast<double>(m_keys.size());
    std::vector<float> out(L * d);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(acc[i] * inv);
    return Matrix(L, d, std::move(out));
}

LayerCache LayerCache::select(std::span<const std::size_t> kept) const {
    for (std::size_t i = 0; i < kept.size(); ++i) {
        if (kept[i] >= seq_len() || (i > 0 && kept[i] <= kept[i - 1])) {
            throw ValidationError("layer " + std::to_string(m_layer_index) +
                                  ": kept indices must be strictly increasing and in range");
        }
    }
    std::vector<Matrix> keys, values;
    keys.reserve(m_keys.size());
    values.reserve(m_values.size());
    for (std::size_t h = 0; h < m_keys.size(); ++h) {
        keys.push_back(m_keys[h].select_rows(kept));
        values.push_back(m_values[h].select_rows(kept));
    }
    std::vector<TokenMeta> meta;
    meta.reserve(kept.size());
    for (std::size_t i : kept) meta.push_back(m_meta[i]);

    std::vector<FrameLayout> layouts;
    layouts.reserve(m_layouts.size());
    for (const auto& lay : m_layouts) {
        auto first = std::lower_bound(kept.begin(), kept.end(), lay.span_start);
        auto last = std::lower_bound(kept.begin(), kept.end(), lay.span_end);
        FrameLayout out = lay;
        out.span_start = static_cast<std::size_t>(first - kept.begin());
        out.span_end = static_cast<std::size_t>(last - kept.begin());
        out.pruned = lay.pruned || out.span_length() != lay.span_length();
        layouts.push_back(out);
    }
    return LayerCache(m_layer_index, std::move(keys), std::move(values), std::move(meta),
                      std::move(layouts), m_queries);
}

}  // namespace stlite
