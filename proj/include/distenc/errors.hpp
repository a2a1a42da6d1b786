#pragma once

#include <stdexcept>
#include <string>

namespace distenc {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor extent disagreement; message names both shapes.
struct ShapeError : Error {
    using Error::Error;
};

// Violated operation contract: bad argument, domain error, degenerate input.
struct ValueError : Error {
    using Error::Error;
};

// A forward op produced (or was fed) NaN/Inf. Overflow is an error, never a value.
struct NonFiniteError : Error {
    using Error::Error;
};

// File problems: unreadable, refused overwrite, failed integrity check.
struct IoError : Error {
    using Error::Error;
};

// Config file problems: missing keys, bad types, inconsistent values.
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace distenc
