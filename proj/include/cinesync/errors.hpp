#pragma once

#include <stdexcept>
#include <string>

namespace cinesync {

/// Dimension or configuration disagreement between two otherwise valid objects
/// (e.g. checkpoint trained on a different feature width than the input cine).
struct ShapeError : std::invalid_argument {
    explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

/// Malformed or unsupported on-disk content (bad header, wrong version,
/// payload size mismatch, non-finite values).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace cinesync
