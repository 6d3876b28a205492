// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "stlite/cache.hpp"
#include "stlite/types.hpp"

namespace stlite {

/// Binary PGM (P5, maxval 255), grid_cols x grid_rows: kept cells 255, evicted cells 0.
/// The layout must be dense and lie inside the result's sequence.
std::string retention_map_pgm(const EvictionResult& result, const FrameLayout& layout);

void emit_retention_map(const EvictionResult& result, const FrameLayout& layout,
                        const std::filesystem::path& file);

}  // namespace stlite
