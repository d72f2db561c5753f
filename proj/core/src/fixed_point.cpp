#include "sunroll/fixed_point.hpp"

#include <algorithm>
#include <deque>
#include <limits>

#include "sunroll/pca.hpp"

namespace sunroll {

FixedPointResult mask_fixed_point(const Matrix& w, const Vector& y, FixedPointOptions options) {
  if (!(options.tol > 0.0)) throw InvalidArgument("fixed point: tol must be positive");
  if (options.tail < 1) throw InvalidArgument("fixed point: tail window must be positive");
  require_length(y, w.cols(), "fixed point: y");
  const Index n = w.cols();
  const ResidualLayer layer{w, Matrix()};

  FixedPointResult out;
  out.jacobian = Matrix::Identity(n, n);
  std::deque<Mask> recent_masks;
  std::deque<double> recent_margins;
  Vector x = y;
  for (Index it = 0; it < options.max_iterations; ++it) {
    UnitOutput unit = residual_unit_forward(x, layer, true);
    out.jacobian = unit_jacobian(layer, unit.mask, true) * out.jacobian;
    recent_masks.push_back(unit.mask);
    recent_margins.push_back(unit.pre_activation.size() ? unit.pre_activation.cwiseAbs().minCoeff() : 0.0);
    if (static_cast<Index>(recent_masks.size()) > options.tail) {
      recent_masks.pop_front();
      recent_margins.pop_front();
    }
    const double step = (unit.h - x).norm();
    x = std::move(unit.h);
    out.iterations = it + 1;
    if (step < options.tol) {
      out.converged = true;
      break;
    }
  }
  out.x = x;
  out.mask = Mask::Zero(w.rows());
  for (const auto& m : recent_masks) out.mask = out.mask.cwiseMax(m);
  for (Index i = 0; i < w.rows(); ++i)
    if (out.mask[i] > 0.0) out.support.push_back(i);
  out.dof_lemma3 = n - static_cast<Index>(out.support.size());
  out.tail_margin = recent_margins.empty() ? 0.0 : *std::min_element(recent_margins.begin(), recent_margins.end());

  Matrix w_s(static_cast<Index>(out.support.size()), n);
  for (std::size_t r = 0; r < out.support.size(); ++r) w_s.row(static_cast<Index>(r)) = w.row(out.support[r]);
  const Vector projected = y - row_space_projector(w_s) * y;
  out.projector_residual = (x - projected).norm();
  out.jacobian_trace = out.jacobian.trace();
  return out;
}

}  // namespace sunroll
