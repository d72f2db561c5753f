#pragma once

#include <Eigen/Dense>

#include <string>

#include "sunroll/error.hpp"

namespace sunroll {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline void require_length(const Vector& v, Index expected, const std::string& what) {
  if (v.size() != expected) {
    throw DimensionError(what, static_cast<std::size_t>(expected),
                         static_cast<std::size_t>(v.size()));
  }
}

inline void require_finite(const Vector& v, const std::string& what) {
  if (!v.allFinite()) throw NumericalError(what + ": non-finite value");
}

}  // namespace sunroll
