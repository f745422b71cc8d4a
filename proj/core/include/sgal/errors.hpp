#pragma once

#include <stdexcept>
#include <string>

namespace sgal {

/// Tensor/layer dimension mismatch.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// Caller violated a contract (empty batch, bad flag combination, ...).
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or inconsistent dataset / checkpoint contents.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite values where finite ones are required (diverging training, bad gradients).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Mismatched state objects (tape from a different network, stale Adam moments).
struct StateError : std::runtime_error {
    explicit StateError(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem trouble.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace sgal
