// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace stlite {

/// Worker count from STLITE_THREADS (unset or 0 = hardware concurrency).
std::size_t configured_threads();

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = configured_threads()).
/// The first exception thrown by any task is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t threads = 0);

}  // namespace stlite
