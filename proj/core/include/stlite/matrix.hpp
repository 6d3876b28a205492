// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace stlite {

/**
 * @brief Dense row-major matrix of 32-bit floats.
 *
 * Immutable after construction. The constructor rejects a data buffer whose length is not
 * rows * cols and any non-finite entry; the error message carries the flat element offset of
 * the first offending value.
 */
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);

    /// rows x cols matrix of zeros.
    static Matrix zeros(std::size_t rows, std::size_t cols);

    std::size_t rows() const noexcept { return m_rows; }
    std::size_t cols() const noexcept { return m_cols; }
    bool empty() const noexcept { return m_rows == 0 || m_cols == 0; }

    std::span<const float> data() const noexcept { return m_data; }
    std::span<const float> row(std::size_t r) const noexcept {
        return {m_data.data() + r * m_cols, m_cols};
    }
    float operator()(std::size_t r, std::size_t c) const noexcept { return m_data[r * m_cols + c]; }

    /// New matrix made of the given rows, in the given order.
    Matrix select_rows(std::span<const std::size_t> indices) const;

    /// The trailing `count` rows.
    Matrix tail_rows(std::size_t count) const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t m_rows = 0;
    std::size_t m_cols = 0;
    std::vector<float> m_data;
};

}  // namespace stlite
