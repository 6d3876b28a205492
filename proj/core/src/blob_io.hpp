// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace stlite::detail {

std::string read_text(const std::filesystem::path& file);

/// Reads exactly `expected_bytes` of little-endian f32 and rejects non-finite values.
/// `where` prefixes every error message.
std::vector<float> read_f32_blob(const std::filesystem::path& file, std::size_t expected_bytes,
                                 const std::string& where);

void write_f32_blob(const std::filesystem::path& file, std::span<const float> data);

void write_text(const std::filesystem::path& file, const std::string& text);

/// Builds a directory in a sibling staging location via `fill`, then renames it over `target`.
void write_directory_atomically(const std::filesystem::path& target,
                                const std::function<void(const std::filesystem::path&)>& fill);

/// Writes a file through a temporary sibling and a rename.
void write_file_atomically(const std::filesystem::path& target, const std::string& bytes);

}  // namespace stlite::detail
