// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#include "stlite/matrix.hpp"

#include <cmath>
#include <string>

#include "stlite/error.hpp"

namespace stlite {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : m_rows(rows), m_cols(cols), m_data(std::move(data)) {
    if (m_data.size() != rows * cols) {
        throw ValidationError("matrix: data length " + std::to_string(m_data.size()) + " != " +
                              std::to_string(rows) + " x " + std::to_string(cols));
    }
    for (std::size_t i = 0; i < m_data.size(); ++i) {
        if (!std::isfinite(m_data[i])) {
            throw ValidationError("matrix: non-finite value at element offset " + std::to_string(i));
        }
    }
}

Matrix Matrix::zeros(std::size_t rows, std::size_t cols) {
    return Matrix(rows, cols, std::vector<float>(rows * cols, 0.0f));
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
    std::vector<float> out;
    out.reserve(indices.size() * m_cols);
    for (std::size_t r : indices) {
        if (r >= m_rows) {
            throw ValidationError("matrix: row " + std::to_string(r) + " out of range " +
                                  std::to_string(m_rows));
        }
        auto src = row(r);
        out.insert(out.end(), src.begin(), src.end());
    }
    Matrix m;
    m.m_rows = indices.size();
    m.m_cols = m_cols;
    m.m_data = std::move(out);
    return m;
}

Matrix Matrix::tail_rows(std::size_t count) const {
    if (count > m_rows) {
        throw ValidationError("matrix: cannot take " + std::to_string(count) + " trailing rows of " +
                              std::to_string(m_rows));
    }
    Matrix m;
    m.m_rows = count;
    m.m_cols = m_cols;
    m.m_data.assign(m_data.end() - static_cast<std::ptrdiff_t>(count * m_cols), m_data.end());
    return m;
}

}  // namespace stlite
