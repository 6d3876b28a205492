// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#include "stlite/retention_map.hpp"

#include <algorithm>
#include <string>

#include "blob_io.hpp"
#include "stlite/error.hpp"

namespace stlite {

std::string retention_map_pgm(const EvictionResult& result, const FrameLayout& layout) {
    if (layout.pruned || layout.span_length() != layout.cell_count()) {
        throw ValidationError("retention map: frame " + std::to_string(layout.frame_index) +
                              " has a pruned layout; maps need the full grid");
    }
    if (layout.span_end > result.seq_len) {
        throw ValidationError("retention map: frame " + std::to_string(layout.frame_index) +
                              " lies outside the scored sequence");
    }
    std::string out = "P5\n" + std::to_string(layout.grid_cols) + " " + std::to_string(layout.grid_rows) + "\n255\n";
    const std::size_t header = out.size();
    out.resize(header + layout.cell_count(), '\0');
    auto it = std::lower_bound(result.kept_indices.begin(), result.kept_indices.end(), layout.span_start);
    for (; it != result.kept_indices.end() && *it < layout.span_end; ++it) {
        out[header + (*it - layout.span_start)] = static_cast<char>(255);
    }
    return out;
}

void emit_retention_map(const EvictionResult& result, const FrameLayout& layout, const std::filesystem::path& file) {
    detail::write_file_atomically(file, retention_map_pgm(result, layout));
}

}  // namespace stlite
