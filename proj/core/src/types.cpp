// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#include "stlite/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stlite/error.hpp"

namespace stlite {

void BudgetConfig::validate() const {
    if (!(beta > 0.0 && beta <= 1.0)) {
        throw ValidationError("config: beta must lie in (0, 1], got " + std::to_string(beta));
    }
    if (delta == 0) throw ValidationError("config: delta must be >= 1");
}

std::size_t BudgetConfig::budget_for(std::size_t seq_len) const noexcept {
    if (seq_len == 0) return 0;
    const double raw = std::floor(beta * static_cast<double>(seq_len));
    const auto b = raw < 1.0 ? std::size_t{1} : static_cast<std::size_t>(raw);
    return std::min(b, seq_len);
}

}  // namespace stlite
