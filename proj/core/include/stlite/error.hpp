// Copyright (C) 2026 The stlite Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace stlite {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input violates a documented invariant (shape, finiteness, layout, config range).
/// The message names the offending location, e.g. "layer 1: layouts[0]: ...".
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Filesystem failure: unreadable input, unwritable output, short read.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace stlite
