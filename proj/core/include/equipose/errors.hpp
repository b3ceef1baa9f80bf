#pragma once

#include <stdexcept>
#include <string>

namespace equipose {

// Raised when the chordal-mean minimizer is not unique (near-zero
// singular-value gap in the accumulated rotation matrix).
class DegenerateMean : public std::runtime_error {
public:
    explicit DegenerateMean(const std::string& what) : std::runtime_error(what) {}
};

// Tensor shape / axis contract violations. Message names both shapes.
class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// File / stream format problems (bad magic, truncated payload, version).
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace equipose
