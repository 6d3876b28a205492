// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#include "stlite/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "stlite/error.hpp"

namespace stlite {

namespace {

double sum_squares(std::span<const float> a) noexcept {
    double s = 0.0;
    for (float x : a) s += static_cast<double>(x) * x;
    return s;
}

double dot(std::span<const float> a, std::span<const float> b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

// Cosine from precomputed squared norms. sqrt(na * nb) (rather than sqrt(na) * sqrt(nb)) makes
// cos(x, x) exactly 1.
double cosine_from(double d, double na, double nb) noexcept {
    constexpr double eps2 = kZeroNormEpsilon * kZeroNormEpsilon;
    if (na < eps2 || nb < eps2) return 0.0;
    return std::clamp(d / std::sqrt(na * nb), -1.0, 1.0);
}

std::vector<double> row_sum_squares(const Matrix& m) {
    std::vector<double> out(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) out[r] = sum_squares(m.row(r));
    return out;
}

}  // namespace

AttentionWindow::AttentionWindow(Matrix q)
    : AttentionWindow(q, q.cols() ? 1.0 / std::sqrt(static_cast<double>(q.cols())) : 1.0) {}

AttentionWindow::AttentionWindow(Matrix q, double s) : queries(std::move(q)), scale(s) {
    if (queries.rows() == 0) throw ValidationError("attention window: needs at least one query row");
    if (!(scale > 0.0) || !std::isfinite(scale)) throw ValidationError("attention window: scale must be > 0");
}

double cosine(std::span<const float> a, std::span<const float> b) noexcept {
    return cosine_from(dot(a, b), sum_squares(a), sum_squares(b));
}

std::vector<double> base_attention_prior(const Matrix& keys, const AttentionWindow& window) {
    const Matrix& q = window.queries;
    if (q.cols() != keys.cols()) {
        throw ValidationError("base attention prior: query dim " + std::to_string(q.cols()) +
                              " != key dim " + std::to_string(keys.cols()));
    }
    const std::size_t L = keys.rows();
    std::vector<double> acc(L, 0.0);
    if (L == 0) return acc;
    std::vector<double> logits(L);
    for (std::size_t r = 0; r < q.rows(); ++r) {
        auto qr = q.row(r);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < L; ++i) {
            logits[i] = window.scale * dot(qr, keys.row(i));
            mx = std::max(mx, logits[i]);
        }
        double z = 0.0;
        for (std::size_t i = 0; i < L; ++i) {
            logits[i] = std::exp(logits[i] - mx);
            z += logits[i];
        }
        for (std::size_t i = 0; i < L; ++i) acc[i] += logits[i] / z;
    }
    return acc;
}

std::vector<AttentionWindow> observation_windows(const LayerCache& cache, std::size_t delta) {
    const std::string where = "layer " + std::to_string(cache.layer_index()) + ": ";
    if (delta == 0) throw ValidationError(where + "observation window must be >= 1");
    if (delta > cache.seq_len()) {
        throw ValidationError(where + "observation window " + std::to_string(delta) +
                              " exceeds sequence length " + std::to_string(cache.seq_len()));
    }
    if (!cache.queries().empty() && delta > cache.query_len()) {
        throw ValidationError(where + "observation window " + std::to_string(delta) + " exceeds the " +
                              std::to_string(cache.query_len()) + " stored query rows");
    }
    std::vector<AttentionWindow> out;
    out.reserve(cache.num_heads());
    for (std::size_t h = 0; h < cache.num_heads(); ++h) {
        const Matrix& src = cache.queries().empty() ? cache.keys()[h] : cache.queries()[h];
        out.emplace_back(src.tail_rows(delta));
    }
    return out;
}

std::vector<double> layer_attention_prior(const LayerCache& cache, std::size_t delta) {
    const auto windows = observation_windows(cache, delta);
    std::vector<double> mean(cache.seq_len(), 0.0);
    for (std::size_t h = 0; h < windows.size(); ++h) {
        const auto a = base_attention_prior(cache.keys()[h], windows[h]);
        for (std::size_t i = 0; i < a.size(); ++i) mean[i] += a[i];
    }
    const double inv = 1.0 / static_cast<double>(windows.size());
    for (double& x : mean) x *= inv;
    return mean;
}

Matrix window_attention_map(const LayerCache& cache, std::size_t delta) {
    const auto windows = observation_windows(cache, delta);
    const std::size_t L = cache.seq_len();
    std::vector<double> acc(delta * L, 0.0);
    std::vector<double> logits(L);
    for (std::size_t h = 0; h < windows.size(); ++h) {
        const Matrix& keys = cache.keys()[h];
        const Matrix& q = windows[h].queries;
        for (std::size_t r = 0; r < delta; ++r) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < L; ++i) {
                logits[i] = windows[h].scale * dot(q.row(r), keys.row(i));
                mx = std::max(mx, logits[i]);
            }
            double z = 0.0;
            for (std::size_t i = 0; i < L; ++i) {
                logits[i] = std::exp(logits[i] - mx);
                z += logits[i];
            }
            for (std::size_t i = 0; i < L; ++i) acc[r * L + i] += logits[i] / z;
        }
    }
    std::vector<float> out(acc.size());
    const double inv = 1.0 / static_cast<double>(windows.size());
    for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] * inv);
    return Matrix(delta, L, std::move(out));
}

std::vector<double> max_pool_votes(std::span<const double> votes, std::size_t kernel) {
    const std::size_t half = kernel / 2;
    std::vector<double> out(votes.size());
    for (std::size_t i = 0; i < votes.size(); ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(votes.size(), i + half + 1);
        out[i] = *std::max_element(votes.begin() + static_cast<std::ptrdiff_t>(lo),
                                   votes.begin() + static_cast<std::ptrdiff_t>(hi));
    }
    return out;
}

SaliencyGrid local_uniformity_and_saliency(const Matrix& cells, std::size_t rows, std::size_t cols) {
    std::vector<std::uint8_t> present(rows * cols, 1);
    return local_uniformity_and_saliency(cells, rows, cols, present);
}

SaliencyGrid local_uniformity_and_saliency(const Matrix& cells, std::size_t rows, std::size_t cols,
                                           std::span<const std::uint8_t> present) {
    if (rows == 0 || cols == 0) throw ValidationError("saliency: grid must have at least one cell");
    if (cells.rows() != rows * cols) {
        throw ValidationError("saliency: " + std::to_string(cells.rows()) + " cell vectors for a " +
                              std::to_string(rows) + "x" + std::to_string(cols) + " grid");
    }
    if (present.size() != rows * cols) throw ValidationError("saliency: presence mask size mismatch");

    const auto norms = row_sum_squares(cells);
    SaliencyGrid g{rows, cols, std::vector<double>(rows * cols, 1.0), std::vector<double>(rows * cols, 0.0)};
    for (std::size_t u = 0; u < rows; ++u) {
        for (std::size_t v = 0; v < cols; ++v) {
            const std::size_t c = u * cols + v;
            if (!present[c]) continue;
            double sum = 0.0;
            std::size_t n = 0;
            for (std::size_t p = (u > 0 ? u - 1 : 0); p <= std::min(rows - 1, u + 1); ++p) {
                for (std::size_t q = (v > 0 ? v - 1 : 0); q <= std::min(cols - 1, v + 1); ++q) {
                    const std::size_t nb = p * cols + q;
                    if (nb == c || !present[nb]) continue;
                    sum += cosine_from(dot(cells.row(c), cells.row(nb)), norms[c], norms[nb]);
                    ++n;
                }
            }
            g.uniformity[c] = n ? sum / static_cast<double>(n) : 1.0;
            g.saliency[c] = 1.0 - g.uniformity[c];
        }
    }
    return g;
}

std::vector<double> trajectory_redundancy(const Matrix& historical, const Matrix& current) {
    if (current.rows() == 0) throw ValidationError("trajectory redundancy: current frame is empty");
    if (historical.rows() > 0 && historical.cols() != current.cols()) {
        throw ValidationError("trajectory redundancy: dimension mismatch " +
                              std::to_string(historical.cols()) + " vs " + std::to_string(current.cols()));
    }
    const auto hn = row_sum_squares(historical);
    const auto cn = row_sum_squares(current);
    std::vector<double> rho(historical.rows());
    for (std::size_t i = 0; i < historical.rows(); ++i) {
        double best = -std::numeric_limits<double>::infinity();
        auto hi = historical.row(i);
        for (std::size_t j = 0; j < current.rows(); ++j) {
            best = std::max(best, cosine_from(dot(hi, current.row(j)), hn[i], cn[j]));
        }
        rho[i] = best;
    }
    return rho;
}

double redundancy_threshold(std::span<const double> rho, std::size_t budget_b) {
    if (rho.empty()) throw ValidationError("redundancy threshold: empty redundancy list");
    if (budget_b == 0) throw ValidationError("redundancy threshold: budget must be >= 1");
    if (budget_b >= rho.size()) return *std::max_element(rho.begin(), rho.end());
    std::vector<double> sorted(rho.begin(), rho.end());
    auto nth = sorted.begin() + static_cast<std::ptrdiff_t>(budget_b - 1);
    std::nth_element(sorted.begin(), nth, sorted.end());
    return *nth;
}

std::vector<std::uint8_t> temporal_gate(std::span<const double> rho, double tau_red) {
    std::vector<std::uint8_t> m(rho.size());
    for (std::size_t i = 0; i < rho.size(); ++i) m[i] = rho[i] <= tau_red ? 1 : 0;
    return m;
}

std::vector<double> integrate_scores(std::span<const double> a_base, std::span<const double> phi,
                                     std::span<const std::uint8_t> m_time,
                                     std::span<const TokenMeta> meta, const BudgetConfig& config) {
    const std::size_t L = meta.size();
    if (a_base.size() != L || phi.size() != L || m_time.size() != L) {
        throw ValidationError("integrate scores: length mismatch (a_base " + std::to_string(a_base.size()) +
                              ", phi " + std::to_string(phi.size()) + ", m_time " +
                              std::to_string(m_time.size()) + ", meta " + std::to_string(L) + ")");
    }
    auto minmax_visual = [&](std::span<const double> xs) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t i = 0; i < L; ++i) {
            if (!meta[i].is_visual()) continue;
            lo = std::min(lo, xs[i]);
            hi = std::max(hi, xs[i]);
        }
        return std::pair{lo, hi};
    };
    auto scaler = [](std::pair<double, double> r) {
        const double range = r.second - r.first;
        return [=](double x) { return range > 0.0 ? (x - r.first) / range : 0.0; };
    };
    const auto a_range = minmax_visual(a_base);
    const auto p_range = minmax_visual(phi);
    const auto norm_a = scaler(a_range);
    const auto norm_p = scaler(p_range);

    std::vector<double> s(L);
    for (std::size_t i = 0; i < L; ++i) {
        if (!meta[i].is_visual()) {
            s[i] = a_base[i];
            continue;
        }
        double a = a_base[i];
        double p = config.enable_css ? phi[i] : 0.0;
        if (config.normalize_terms) {
            a = norm_a(a);
            p = config.enable_css ? norm_p(p) : 0.0;
        }
        const double gate = config.enable_tsg ? static_cast<double>(m_time[i]) : 1.0;
        s[i] = gate * (a + p);
    }
    return s;
}

}  // namespace stlite
