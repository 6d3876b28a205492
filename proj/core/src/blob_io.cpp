// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#include "blob_io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "stlite/error.hpp"

namespace stlite::detail {

namespace fs = std::filesystem;

namespace {

fs::path staging_path(const fs::path& target) {
    const fs::path t = target.lexically_normal();
    fs::path parent = t.parent_path();
    if (parent.empty()) parent = ".";
    return parent / ("." + t.filename().string() + ".tmp-" + std::to_string(::getpid()));
}

}  // namespace

std::string read_text(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<float> read_f32_blob(const fs::path& file, std::size_t expected_bytes, const std::string& where) {
    std::error_code ec;
    const auto actual = fs::file_size(file, ec);
    if (ec) throw IoError(where + "cannot stat blob " + file.string());
    if (actual != expected_bytes) {
        throw ValidationError(where + "blob length mismatch: file has " + std::to_string(actual) +
                              " bytes, expected " + std::to_string(expected_bytes));
    }
    std::vector<float> data(expected_bytes / sizeof(float));
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError(where + "cannot open blob " + file.string());
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(expected_bytes));
    if (!in) throw IoError(where + "short read on blob " + file.string());
    if constexpr (std::endian::native == std::endian::big) {
        for (auto& f : data) f = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(f)));
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!std::isfinite(data[i])) {
            throw ValidationError(where + "non-finite value at element offset " + std::to_string(i) +
                                  " (byte offset " + std::to_string(i * sizeof(float)) + ")");
        }
    }
    return data;
}

void write_f32_blob(const fs::path& file, std::span<const float> data) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + file.string());
    if constexpr (std::endian::native == std::endian::big) {
        for (float f : data) {
            const auto bits = __builtin_bswap32(std::bit_cast<std::uint32_t>(f));
            out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
        }
    } else {
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size() * sizeof(float)));
    }
    if (!out) throw IoError("short write on " + file.string());
}

void write_text(const fs::path& file, const std::string& text) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + file.string());
    out << text;
    if (!out) throw IoError("short write on " + file.string());
}

void write_directory_atomically(const fs::path& target, const std::function<void(const fs::path&)>& fill) {
    const fs::path staging = staging_path(target);
    std::error_code ec;
    fs::remove_all(staging, ec);
    if (!fs::create_directories(staging, ec) || ec) {
        throw IoError("cannot create directory " + staging.string() + ": " + ec.message());
    }
    try {
        fill(staging);
    } catch (...) {
        fs::remove_all(staging, ec);
        throw;
    }
    if (fs::exists(target, ec)) fs::remove_all(target, ec);
    fs::rename(staging, target, ec);
    if (ec) {
        const auto msg = ec.message();
        fs::remove_all(staging, ec);
        throw IoError("cannot move " + staging.string() + " to " + target.string() + ": " + msg);
    }
}

void write_file_atomically(const fs::path& target, const std::string& bytes) {
    const fs::path staging = staging_path(target);
    write_text(staging, bytes);
    std::error_code ec;
    fs::rename(staging, target, ec);
    if (ec) {
        const auto msg = ec.message();
        fs::remove(staging, ec);
        throw IoError("cannot move " + staging.string() + " to " + target.string() + ": " + msg);
    }
}

}  // namespace stlite::detail
