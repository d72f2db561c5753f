#include "sunroll/pca.hpp"

#include <numeric>

namespace sunroll {

Matrix sample_correlation(std::span<const Vector> samples) {
  if (samples.empty()) throw InvalidArgument("sample correlation: empty dataset");
  const Index n = samples.front().size();
  Matrix c = Matrix::Zero(n, n);
  for (const auto& x : samples) {
    require_length(x, n, "sample correlation: sample");
    c.selfadjointView<Eigen::Lower>().rankUpdate(x);
  }
  c = c.selfadjointView<Eigen::Lower>();
  return c / static_cast<double>(samples.size());
}

Matrix row_space_projector(const Matrix& w) {
  if (w.rows() == 0) return Matrix::Zero(w.cols(), w.cols());
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(w);
  return cod.pseudoInverse() * w;
}

double pca_objective(const Matrix& projector, const Matrix& correlation, double sigma2) {
  if (projector.rows() != correlation.rows() || projector.cols() != correlation.cols())
    throw DimensionError("pca objective: projector and correlation shapes differ");
  const Index n = correlation.rows();
  return (projector * (correlation - sigma2 * Matrix::Identity(n, n))).trace();
}

PcaResult pca_closed_form_from_correlation(const Matrix& correlation, double sigma2) {
  if (!(sigma2 > 0.0)) throw InvalidArgument("pca: sigma^2 must be positive");
  if (correlation.rows() != correlation.cols()) throw DimensionError("pca: correlation is not square");
  const Index n = correlation.rows();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(correlation);
  PcaResult out;
  out.eigenvalues = eig.eigenvalues().reverse();
  out.eigenvectors = eig.eigenvectors().rowwise().reverse();
  std::vector<Index> removed;
  Index strictly_above = 0;
  for (Index i = 0; i < n; ++i) {
    if (out.eigenvalues[i] < sigma2) removed.push_back(i);
    if (out.eigenvalues[i] > sigma2) ++strictly_above;
  }
  out.w.resize(static_cast<Index>(removed.size()), n);
  for (std::size_t r = 0; r < removed.size(); ++r)
    out.w.row(static_cast<Index>(r)) = out.eigenvectors.col(removed[r]).transpose();
  out.dof_spectral = n - static_cast<Index>(removed.size());
  out.dof_literal = n - strictly_above;
  out.objective = pca_objective(row_space_projector(out.w), correlation, sigma2);
  return out;
}

PcaResult pca_closed_form(std::span<const Vector> samples, double sigma2) {
  return pca_closed_form_from_correlation(sample_correlation(samples), sigma2);
}

}  // namespace sunroll
