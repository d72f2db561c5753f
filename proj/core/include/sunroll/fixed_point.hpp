#pragma once

#include <vector>

#include "sunroll/network.hpp"

namespace sunroll {

struct FixedPointOptions {
  double tol = 1e-12;
  Index max_iterations = 10000;
  Index tail = 10;  // iterations whose active units form the support S
};

struct FixedPointResult {
  Vector x;                   // last iterate
  std::vector<Index> support; // S, 0-based unit indices
  Mask mask;                  // indicator of S
  Index dof_lemma3 = 0;       // n - |S|
  bool converged = false;
  Index iterations = 0;
  double projector_residual = 0.0;  // ||x - (I - W_S^+ W_S) y||
  Matrix jacobian;                  // product of (I - W^T D_t W) along the run
  double jacobian_trace = 0.0;
  double tail_margin = 0.0;         // min |W x| over tail iterations and all units
};

// Iterates x <- (I - W^T D(x) W) x from x = y (the symmetric single-unit
// network with an unbounded number of iterations). Non-convergence is
// reported through `converged`, not thrown.
FixedPointResult mask_fixed_point(const Matrix& w, const Vector& y, FixedPointOptions options = {});

}  // namespace sunroll
