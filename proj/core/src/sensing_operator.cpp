#include "sunroll/sensing_operator.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <set>

#include "sunroll/random.hpp"

namespace sunroll {

std::string to_string(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::identity: return "identity";
    case OperatorKind::dense: return "dense";
    case OperatorKind::circular_convolution: return "circular-convolution";
    case OperatorKind::subsampled_dft: return "subsampled-dft";
  }
  return "unknown";
}

SensingOperator SensingOperator::identity(Index n) {
  if (n <= 0) throw InvalidArgument("identity operator: n must be positive");
  SensingOperator op;
  op.kind_ = OperatorKind::identity;
  op.n_ = op.m_ = n;
  op.shape_ = {1, n};
  op.materialize();
  return op;
}

SensingOperator SensingOperator::dense(Matrix phi) {
  if (phi.rows() == 0 || phi.cols() == 0) throw InvalidArgument("dense operator: empty matrix");
  if (!phi.allFinite()) throw NumericalError("dense operator: non-finite entries");
  SensingOperator op;
  op.kind_ = OperatorKind::dense;
  op.m_ = phi.rows();
  op.n_ = phi.cols();
  op.shape_ = {1, op.n_};
  op.dense_ = std::move(phi);
  op.materialize();
  return op;
}

SensingOperator SensingOperator::circular_convolution(ImageShape shape, Matrix kernel) {
  if (shape.rows <= 0 || shape.cols <= 0) throw InvalidArgument("convolution: empty grid");
  if (kernel.size() == 0) throw InvalidArgument("convolution: empty kernel");
  if (kernel.rows() > shape.rows || kernel.cols() > shape.cols)
    throw DimensionError("convolution: kernel larger than the grid");
  SensingOperator op;
  op.kind_ = OperatorKind::circular_convolution;
  op.shape_ = shape;
  op.n_ = op.m_ = shape.size();
  op.kernel_ = std::move(kernel);
  op.materialize();
  return op;
}

SensingOperator SensingOperator::gaussian_blur(ImageShape shape, double std_dev, Index radius) {
  if (!(std_dev > 0.0)) throw InvalidArgument("gaussian blur: std must be positive");
  Matrix kernel = Matrix::Zero(shape.rows, shape.cols);
  double total = 0.0;
  for (Index a = -radius; a <= radius; ++a) {
    for (Index b = -radius; b <= radius; ++b) {
      if (shape.rows == 1 && a != 0) continue;
      const double w = std::exp(-0.5 * static_cast<double>(a * a + b * b) / (std_dev * std_dev));
      const Index r = ((a % shape.rows) + shape.rows) % shape.rows;
      const Index c = ((b % shape.cols) + shape.cols) % shape.cols;
      kernel(r, c) += w;
      total += w;
    }
  }
  return circular_convolution(shape, kernel / total);
}

SensingOperator SensingOperator::subsampled_dft(ImageShape shape, std::vector<Index> frequencies) {
  if (shape.rows <= 0 || shape.cols <= 0) throw InvalidArgument("dft: empty grid");
  if (frequencies.empty()) throw InvalidArgument("dft: empty sampling set");
  std::set<Index> closed;
  for (Index k : frequencies) {
    if (k < 0 || k >= shape.size()) throw InvalidArgument("dft: frequency index out of range");
    const Index kr = k / shape.cols;
    const Index kc = k % shape.cols;
    const Index pr = (shape.rows - kr) % shape.rows;
    const Index pc = (shape.cols - kc) % shape.cols;
    closed.insert(k);
    closed.insert(pr * shape.cols + pc);
  }
  SensingOperator op;
  op.kind_ = OperatorKind::subsampled_dft;
  op.shape_ = shape;
  op.n_ = shape.size();
  op.frequencies_.assign(closed.begin(), closed.end());
  op.m_ = static_cast<Index>(op.frequencies_.size());
  op.materialize();
  return op;
}

SensingOperator SensingOperator::variable_density_dft(ImageShape shape, double fraction,
                                                      std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw InvalidArgument("dft: sampling fraction must be in (0, 1]");
  const Index n = shape.size();
  Rng rng(seed);
  auto centered = [](Index k, Index len) {
    return static_cast<double>(std::min(k, len - k)) / static_cast<double>(std::max<Index>(len, 1));
  };
  std::vector<Index> picked{0};
  for (Index k = 1; k < n; ++k) {
    const double fr = centered(k / shape.cols, shape.rows);
    const double fc = centered(k % shape.cols, shape.cols);
    const double radius = std::sqrt(fr * fr + fc * fc);
    // Density decays with distance from DC; the scale keeps the expected
    // count near fraction * n / 2 before conjugate closure.
    const double p = std::min(1.0, fraction * 1.5 * std::exp(-3.0 * radius));
    if (rng.uniform() < p) picked.push_back(k);
  }
  return subsampled_dft(shape, std::move(picked));
}

Vector SensingOperator::apply(const Vector& u, Direction direction) const {
  const bool fwd = direction == Direction::forward;
  require_length(u, fwd ? n_ : output_length(),
                 fwd ? "sensing operator (forward)" : "sensing operator (adjoint)");
  switch (kind_) {
    case OperatorKind::identity: return u;
    case OperatorKind::dense: return fwd ? Vector(dense_ * u) : Vector(dense_.transpose() * u);
    case OperatorKind::circular_convolution: return apply_convolution(u, !fwd);
    case OperatorKind::subsampled_dft: return fwd ? apply_dft(u) : apply_dft_adjoint(u);
  }
  return u;
}

Vector SensingOperator::apply_convolution(const Vector& u, bool transpose) const {
  const Index rows = shape_.rows, cols = shape_.cols;
  Vector out = Vector::Zero(n_);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (Index a = 0; a < kernel_.rows(); ++a) {
        for (Index b = 0; b < kernel_.cols(); ++b) {
          const double k = kernel_(a, b);
          if (k == 0.0) continue;
          // forward: out[r,c] = sum k[a,b] u[r-a, c-b]; transpose uses r+a.
          const Index rr = transpose ? (r + a) % rows : ((r - a) % rows + rows) % rows;
          const Index cc = transpose ? (c + b) % cols : ((c - b) % cols + cols) % cols;
          acc += k * u[rr * cols + cc];
        }
      }
      out[r * cols + c] = acc;
    }
  }
  return out;
}

namespace {

double phase(Index k, Index x, const ImageShape& shape) {
  const Index kr = k / shape.cols, kc = k % shape.cols;
  const Index xr = x / shape.cols, xc = x % shape.cols;
  // Reduce the products modulo the grid before scaling to keep the angle small.
  const double fr = static_cast<double>((kr * xr) % shape.rows) / static_cast<double>(shape.rows);
  const double fc = static_cast<double>((kc * xc) % shape.cols) / static_cast<double>(shape.cols);
  return 2.0 * std::numbers::pi * (fr + fc);
}

}  // namespace

Vector SensingOperator::apply_dft(const Vector& u) const {
  const double scale = 1.0 / std::sqrt(static_cast<double>(n_));
  Vector out(2 * m_);
  for (Index j = 0; j < m_; ++j) {
    std::complex<double> acc{0.0, 0.0};
    for (Index x = 0; x < n_; ++x) acc += u[x] * std::polar(1.0, -phase(frequencies_[j], x, shape_));
    out[2 * j] = scale * acc.real();
    out[2 * j + 1] = scale * acc.imag();
  }
  return out;
}

Vector SensingOperator::apply_dft_adjoint(const Vector& v) const {
  const double scale = 1.0 / std::sqrt(static_cast<double>(n_));
  Vector out(n_);
  for (Index x = 0; x < n_; ++x) {
    std::complex<double> acc{0.0, 0.0};
    for (Index j = 0; j < m_; ++j)
      acc += std::complex<double>(v[2 * j], v[2 * j + 1]) * std::polar(1.0, phase(frequencies_[j], x, shape_));
    out[x] = scale * acc.real();
  }
  return out;
}

void SensingOperator::materialize() {
  if (kind_ == OperatorKind::identity) {
    matrix_ = Matrix::Identity(n_, n_);
  } else if (kind_ == OperatorKind::dense) {
    matrix_ = dense_;
  } else {
    matrix_.resize(output_length(), n_);
    for (Index j = 0; j < n_; ++j) matrix_.col(j) = forward(Vector::Unit(n_, j));
  }
  gram_ = matrix_.transpose() * matrix_;
}

}  // namespace sunroll
