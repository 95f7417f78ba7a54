#pragma once

#include <stdexcept>
#include <string>

namespace glamor {

// Error categories map 1:1 onto CLI exit codes (see tools/main.cpp).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dimension/shape mismatch between tensors or against an operation contract.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid input values (out-of-range labels, bad bboxes, ...).
struct ValueError : Error {
    using Error::Error;
};

// Operation called in the wrong order (e.g. backward before forward).
struct StateError : Error {
    using Error::Error;
};

// Bad user-supplied configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed file content (image codecs, checkpoints, manifests).
struct FormatError : Error {
    using Error::Error;
};

// Filesystem-level failures.
struct IoError : Error {
    using Error::Error;
};

} // namespace glamor
