// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#include "stlite/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>

#include "blob_io.hpp"
#include "json.hpp"
#include "stlite/error.hpp"
#include "stlite/policy.hpp"

namespace stlite {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Relative slack when comparing a cumulative sum against the coverage target; absorbs the
// rounding difference between summing a row in sorted and original order.
constexpr double kCoverageSlack = 1e-12;

double softmax_at(std::span<const double> raw, std::size_t index) {
    const double mx = *std::max_element(raw.begin(), raw.end());
    double z = 0.0;
    for (double s : raw) z += std::exp(s - mx);
    return std::exp(raw[index] - mx) / z;
}

}  // namespace

double layer_sparsity(const Matrix& attn, double coverage) {
    if (!(coverage > 0.0 && coverage <= 1.0)) {
        throw ValidationError("sparsity: coverage must lie in (0, 1], got " + std::to_string(coverage));
    }
    if (attn.rows() == 0 || attn.cols() == 0) throw ValidationError("sparsity: empty attention map");
    const std::size_t L = attn.cols();
    std::vector<double> row(L);
    double total_count = 0.0;
    for (std::size_t r = 0; r < attn.rows(); ++r) {
        double sum = 0.0;
        for (std::size_t i = 0; i < L; ++i) {
            row[i] = attn(r, i);
            if (row[i] < 0.0) {
                throw ValidationError("sparsity: row " + std::to_string(r) + " has a negative entry");
            }
            sum += row[i];
        }
        if (std::abs(sum - 1.0) > kRowSumTolerance) {
            throw ValidationError("sparsity: row " + std::to_string(r) + " is not normalized (sums to " +
                                  std::to_string(sum) + ")");
        }
        std::sort(row.begin(), row.end(), std::greater<>());
        const double target = coverage * sum - kCoverageSlack * sum;
        double cum = 0.0;
        std::size_t count = 0;
        while (count < L && cum < target) cum += row[count++];
        total_count += static_cast<double>(count);
    }
    return 1.0 - total_count / static_cast<double>(attn.rows()) / static_cast<double>(L);
}

SparsityProfile sparsity_profile(std::span<const Matrix> attns, double coverage, double epsilon) {
    if (attns.size() < 2) throw ValidationError("sparsity profile: at least two layers required");
    if (!(epsilon > 0.0)) throw ValidationError("sparsity profile: epsilon must be > 0");
    SparsityProfile p;
    p.epsilon = epsilon;
    for (std::size_t l = 0; l < attns.size(); ++l) {
        try {
            p.per_layer_sparsity.push_back(layer_sparsity(attns[l], coverage));
        } catch (const ValidationError& e) {
            throw ValidationError("layer " + std::to_string(l) + ": " + e.what());
        }
    }
    for (std::size_t l = 0; l + 1 < attns.size(); ++l) {
        p.max_layer_step = std::max(p.max_layer_step, std::abs(p.per_layer_sparsity[l + 1] - p.per_layer_sparsity[l]));
    }
    p.is_uniform = p.max_layer_step < epsilon;
    return p;
}

double softmax_gap_bound(double delta_gap) noexcept { return 1.0 / (1.0 + std::exp(delta_gap)); }

GapBoundCheck verify_gap_bound(std::span<const double> raw_scores, std::size_t target_index,
                               std::size_t competitor_index) {
    if (target_index >= raw_scores.size() || competitor_index >= raw_scores.size()) {
        throw ValidationError("gap bound: index out of range for " + std::to_string(raw_scores.size()) + " scores");
    }
    if (target_index == competitor_index) throw ValidationError("gap bound: target and competitor must differ");
    GapBoundCheck c;
    c.attn_target = softmax_at(raw_scores, target_index);
    c.bound = softmax_gap_bound(raw_scores[competitor_index] - raw_scores[target_index]);
    c.holds = c.attn_target <= c.bound + kGapBoundSlack;
    return c;
}

std::size_t gap_bound_monte_carlo(std::size_t trials, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> len_dist(2, 512);
    std::uniform_real_distribution<double> spread_dist(0.1, 20.0);
    std::size_t violations = 0;
    std::vector<double> raw;
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t n = len_dist(rng);
        std::normal_distribution<double> logit(0.0, spread_dist(rng));
        raw.resize(n);
        for (double& x : raw) x = logit(rng);
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        const std::size_t target = pick(rng);
        std::size_t competitor = pick(rng);
        if (competitor == target) competitor = (target + 1) % n;
        if (!verify_gap_bound(raw, target, competitor).holds) ++violations;
    }
    return violations;
}

std::size_t gap_bound_violations(const Matrix& attn) {
    std::size_t violations = 0;
    std::vector<double> raw;
    for (std::size_t r = 0; r < attn.rows(); ++r) {
        raw.clear();
        for (float p : attn.row(r)) {
            if (p > 0.0f) raw.push_back(std::log(static_cast<double>(p)));
        }
        if (raw.size() < 2) continue;
        const auto lo = static_cast<std::size_t>(std::min_element(raw.begin(), raw.end()) - raw.begin());
        const auto hi = static_cast<std::size_t>(std::max_element(raw.begin(), raw.end()) - raw.begin());
        if (lo == hi) continue;
        if (!verify_gap_bound(raw, lo, hi).holds) ++violations;
    }
    return violations;
}

double allocation_chaos(std::span<const double> attn_masses, double noise_scale, std::size_t trials,
                        std::size_t total_budget, std::uint64_t seed) {
    const std::size_t n = attn_masses.size();
    if (n == 0 || trials == 0) return 0.0;
    const std::vector<double> flat(n, 1.0);
    const auto uniform = pyramid_allocate(flat, total_budget);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<double> noisy(n);
    double deviation = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        for (std::size_t l = 0; l < n; ++l) noisy[l] = std::max(0.0, attn_masses[l] + noise_scale * unit(rng));
        const bool degenerate = std::all_of(noisy.begin(), noisy.end(), [](double m) { return m == 0.0; });
        const auto alloc = pyramid_allocate(degenerate ? flat : noisy, total_budget);
        for (std::size_t l = 0; l < n; ++l) {
            deviation += std::abs(static_cast<double>(alloc[l]) - static_cast<double>(uniform[l]));
        }
    }
    return deviation / static_cast<double>(trials * n);
}

std::vector<Matrix> load_attention_dump(const fs::path& dir) {
    json manifest;
    try {
        manifest = json::parse(detail::read_text(dir / "manifest.json"));
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("attention manifest: malformed JSON: ") + e.what());
    }
    std::vector<Matrix> out;
    try {
        if (manifest.at("version").get<int>() != 1) throw ValidationError("attention manifest: unsupported version");
        if (manifest.at("kind").get<std::string>() != "attention") {
            throw ValidationError("attention manifest: kind must be \"attention\"");
        }
        const auto& layers = manifest.at("layers");
        if (layers.size() != manifest.at("num_layers").get<std::size_t>()) {
            throw ValidationError("attention manifest: num_layers does not match the layer list");
        }
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const std::string where = "layer " + std::to_string(l) + ": ";
            const auto rows = layers[l].at("rows").get<std::size_t>();
            const auto cols = layers[l].at("cols").get<std::size_t>();
            const auto file = layers[l].at("file").get<std::string>();
            const auto byte_len = layers[l].at("byte_len").get<std::size_t>();
            if (byte_len != rows * cols * sizeof(float)) {
                throw ValidationError(where + "byte_len does not equal rows x cols x 4");
            }
            out.emplace_back(rows, cols, detail::read_f32_blob(dir / file, byte_len, where));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("attention manifest: ") + e.what());
    }
    return out;
}

void save_attention_dump(std::span<const Matrix> layers, const fs::path& dir) {
    json manifest;
    manifest["version"] = 1;
    manifest["kind"] = "attention";
    manifest["num_layers"] = layers.size();
    manifest["layers"] = json::array();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        manifest["layers"].push_back({{"layer_index", l},
                                      {"rows", layers[l].rows()},
                                      {"cols", layers[l].cols()},
                                      {"file", "attn_layer" + std::to_string(l) + ".f32"},
                                      {"byte_len", layers[l].data().size() * sizeof(float)}});
    }
    detail::write_directory_atomically(dir, [&](const fs::path& staging) {
        for (std::size_t l = 0; l < layers.size(); ++l) {
            detail::write_f32_blob(staging / ("attn_layer" + std::to_string(l) + ".f32"), layers[l].data());
        }
        detail::write_text(staging / "manifest.json", manifest.dump(2) + "\n");
    });
}

}  // namespace stlite
