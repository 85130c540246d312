#pragma once

#include <stdexcept>
#include <string>

namespace taskres {

// Bad inputs: shape mismatches, out-of-range labels, invalid configs.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem problems: missing files, short reads, unwritable paths.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values or degenerate numerics encountered mid-computation.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace taskres
