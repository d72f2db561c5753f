#pragma once

#include <span>

#include "sunroll/linalg.hpp"

namespace sunroll {

// (1/N) sum_i x_i x_i^T
Matrix sample_correlation(std::span<const Vector> samples);

// Orthogonal projector onto the row space of W (W^+ W); zero for an empty W.
Matrix row_space_projector(const Matrix& w);

// tr(P (C - sigma2 I)), the large-sample training objective of the linear
// residual network whose end-to-end map is I - P.
double pca_objective(const Matrix& projector, const Matrix& correlation, double sigma2);

struct PcaResult {
  Matrix w;                 // rows: eigenvectors whose eigenvalue is below sigma2
  Vector eigenvalues;       // of the sample correlation, descending
  Matrix eigenvectors;      // columns, matching `eigenvalues`
  Index dof_spectral = 0;   // tr(I - P_W) = #{i : lambda_i >= sigma2}
  Index dof_literal = 0;    // n - #{i : lambda_i > sigma2}, the other sign reading
  double objective = 0.0;   // pca_objective at the returned W
};

// Closed-form minimizer of pca_objective: W spans exactly the eigen-directions
// with negative contribution lambda_i - sigma2 < 0 (ties are retained, i.e.
// kept out of W).
PcaResult pca_closed_form(std::span<const Vector> samples, double sigma2);
PcaResult pca_closed_form_from_correlation(const Matrix& correlation, double sigma2);

}  // namespace sunroll
