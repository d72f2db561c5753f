#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sunroll/linalg.hpp"

namespace sunroll {

enum class OperatorKind { identity, dense, circular_convolution, subsampled_dft };
enum class Direction { forward, adjoint };

std::string to_string(OperatorKind kind);

// Row-major 2-D grid that n-vectors are reshaped onto. A 1-D signal is
// rows = 1.
struct ImageShape {
  Index rows = 1;
  Index cols = 1;
  Index size() const { return rows * cols; }
  bool operator==(const ImageShape&) const = default;
};

// Linear forward model y = Phi x on real n-vectors.
//
// Measurements are always carried as a real vector. For the subsampled DFT the
// m complex coefficients are interleaved as (re, im) channel pairs, so
// output_length() == 2 m and the adjoint is taken with respect to the real
// inner product Re<.,.>. Under that convention Phi^T Phi is the orthogonal
// projection onto the sampled frequencies (the sampling set is closed under
// conjugation at construction).
class SensingOperator {
 public:
  static SensingOperator identity(Index n);
  static SensingOperator dense(Matrix phi);
  // Kernel is anchored at the origin and wraps around the grid; the kernel may
  // be smaller than the grid.
  static SensingOperator circular_convolution(ImageShape shape, Matrix kernel);
  // Normalized Gaussian blur with the given standard deviation (in pixels),
  // truncated at `radius` pixels from the origin.
  static SensingOperator gaussian_blur(ImageShape shape, double std_dev, Index radius);
  // Orthonormally scaled 2-D DFT restricted to the given flat frequency
  // indices (kr * cols + kc). Conjugate partners are added automatically.
  static SensingOperator subsampled_dft(ImageShape shape, std::vector<Index> frequencies);
  // Variable-density random sampling: keeps roughly `fraction` of the
  // frequencies, preferring low ones, always including DC.
  static SensingOperator variable_density_dft(ImageShape shape, double fraction,
                                              std::uint64_t seed);

  OperatorKind kind() const { return kind_; }
  Index n() const { return n_; }
  // Number of measurements (complex coefficients for the DFT kind).
  Index m() const { return m_; }
  // Length of the real measurement vector.
  Index output_length() const { return kind_ == OperatorKind::subsampled_dft ? 2 * m_ : m_; }
  bool is_square() const { return output_length() == n_; }

  Vector apply(const Vector& u, Direction direction) const;
  Vector forward(const Vector& u) const { return apply(u, Direction::forward); }
  Vector adjoint(const Vector& v) const { return apply(v, Direction::adjoint); }

  // Real output_length() x n matrix of the map.
  const Matrix& matrix() const { return matrix_; }
  // Phi^T Phi, n x n.
  const Matrix& gram() const { return gram_; }

  const ImageShape& shape() const { return shape_; }
  const Matrix& kernel() const { return kernel_; }
  const std::vector<Index>& frequencies() const { return frequencies_; }

 private:
  SensingOperator() = default;
  void materialize();

  Vector apply_convolution(const Vector& u, bool transpose) const;
  Vector apply_dft(const Vector& u) const;
  Vector apply_dft_adjoint(const Vector& v) const;

  OperatorKind kind_ = OperatorKind::identity;
  Index n_ = 0;
  Index m_ = 0;
  ImageShape shape_;
  Matrix dense_;
  Matrix kernel_;
  std::vector<Index> frequencies_;
  Matrix matrix_;
  Matrix gram_;
};

}  // namespace sunroll
