// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "stlite/matrix.hpp"

namespace stlite {

enum class Modality : std::uint8_t { Text, Visual };

std::string_view to_string(Modality m) noexcept;

/// Position of a visual token inside its frame's patch grid (u = row, v = column).
struct GridCoord {
    std::uint32_t u = 0;
    std::uint32_t v = 0;
    friend bool operator==(const GridCoord&, const GridCoord&) = default;
};

struct TokenMeta {
    Modality modality = Modality::Text;
    std::uint32_t frame_index = 0;
    std::optional<GridCoord> grid;  // present iff modality == Visual

    static TokenMeta text(std::uint32_t frame) { return {Modality::Text, frame, std::nullopt}; }
    static TokenMeta visual(std::uint32_t frame, std::uint32_t u, std::uint32_t v) {
        return {Modality::Visual, frame, GridCoord{u, v}};
    }
    bool is_visual() const noexcept { return modality == Modality::Visual; }

    friend bool operator==(const TokenMeta&, const TokenMeta&) = default;
};

/**
 * @brief Placement of one screenshot's patch grid inside the token sequence.
 *
 * A dense layout covers every grid cell: the span holds grid_rows * grid_cols visual tokens and
 * span offset k is cell (k / grid_cols, k % grid_cols). A pruned layout is what remains after
 * eviction: the span holds a subset of the cells, still in row-major order.
 */
struct FrameLayout {
    std::uint32_t frame_index = 0;
    std::uint32_t grid_rows = 0;
    std::uint32_t grid_cols = 0;
    std::size_t span_start = 0;
    std::size_t span_end = 0;
    bool pruned = false;

    std::size_t span_length() const noexcept { return span_end - span_start; }
    std::size_t cell_count() const noexcept {
        return static_cast<std::size_t>(grid_rows) * grid_cols;
    }
    bool contains(std::size_t token) const noexcept {
        return token >= span_start && token < span_end;
    }
    /// Grid cell of span offset k in a dense layout.
    GridCoord coord_of_offset(std::size_t k) const noexcept {
        return {static_cast<std::uint32_t>(k / grid_cols), static_cast<std::uint32_t>(k % grid_cols)};
    }
    std::size_t linear(GridCoord c) const noexcept {
        return static_cast<std::size_t>(c.u) * grid_cols + c.v;
    }

    friend bool operator==(const FrameLayout&, const FrameLayout&) = default;
};

/**
 * @brief Key/Value cache of one transformer layer plus the token metadata the scorers need.
 *
 * `queries`, when non-empty, holds per-head query states for the trailing `queries[h].rows()`
 * sequence positions; the observation window reads them. Without stored queries the window
 * falls back to the keys of its own positions.
 *
 * The constructor validates every invariant and throws ValidationError naming the layer and
 * field at fault. Instances are immutable.
 */
class LayerCache {
public:
    LayerCache() = default;
    LayerCache(std::uint32_t layer_index, std::vector<Matrix> keys, std::vector<Matrix> values,
               std::vector<TokenMeta> meta, std::vector<FrameLayout> layouts,
               std::vector<Matrix> queries = {});

    std::uint32_t layer_index() const noexcept { return m_layer_index; }
    std::size_t num_heads() const noexcept { return m_keys.size(); }
    std::size_t head_dim() const noexcept { return m_keys.empty() ? 0 : m_keys.front().cols(); }
    std::size_t seq_len() const noexcept { return m_meta.size(); }
    std::size_t query_len() const noexcept { return m_queries.empty() ? 0 : m_queries.front().rows(); }

    const std::vector<Matrix>& keys() const noexcept { return m_keys; }
    const std::vector<Matrix>& values() const noexcept { return m_values; }
    const std::vector<Matrix>& queries() const noexcept { return m_queries; }
    const std::vector<TokenMeta>& meta() const noexcept { return m_meta; }
    const std::vector<FrameLayout>& layouts() const noexcept { return m_layouts; }

    /// Frame index of the most recent frame with at least one visual token.
    std::optional<std::uint32_t> current_frame() const noexcept;

    /// Per-token key vector averaged over heads (L x d). Feeds the cosine-based scorers.
    Matrix mean_head_keys() const;

    /**
     * Compressed copy holding only the given rows (strictly increasing indices). Layouts that
     * lose tokens become pruned; stored queries are kept as is.
     */
    LayerCache select(std::span<const std::size_t> kept) const;

    friend bool operator==(const LayerCache&, const LayerCache&) = default;

private:
    void validate() const;

    std::uint32_t m_layer_index = 0;
    std::vector<Matrix> m_keys;
    std::vector<Matrix> m_values;
    std::vector<Matrix> m_queries;
    std::vector<TokenMeta> m_meta;
    std::vector<FrameLayout> m_layouts;
};

}  // namespace stlite
