#pragma once

#include <stdexcept>
#include <string>

namespace polydec {

// Shape or index mismatch between arguments.
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// Sampling points do not carry enough information for the requested recovery
// (coincident projections for a branch, or rank(A) below the bound M).
class SamplingError : public std::runtime_error {
 public:
  explicit SamplingError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace polydec
