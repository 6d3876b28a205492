// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <vector>

#include "stlite/cache.hpp"

namespace stlite {

inline constexpr int kContainerVersion = 1;

/**
 * @brief Reads an STKV container directory: `manifest.json` plus one raw little-endian f32 blob
 * per (layer, head, kind).
 *
 * Errors are ValidationError with a location prefix ("layer 2: blobs[3]: ...") for malformed
 * manifests, blob length mismatches, non-finite values and grid/span inconsistencies, and
 * IoError when a file cannot be read.
 */
std::vector<LayerCache> load_cache(const std::filesystem::path& container);

/// Writes `caches` as an STKV container. The directory is assembled next to the target and
/// renamed into place, so a failed write never leaves a half-written container behind.
void save_cache(const std::vector<LayerCache>& caches, const std::filesystem::path& container);

}  // namespace stlite
