#include "sunroll/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sunroll/random.hpp"

namespace sunroll {

std::string to_string(WeightMode mode) { return mode == WeightMode::shared ? "ws" : "wc"; }

WeightMode parse_weight_mode(const std::string& text) {
  if (text == "ws" || text == "shared" || text == "weight-sharing") return WeightMode::shared;
  if (text == "wc" || text == "changing" || text == "weight-changing") return WeightMode::changing;
  throw InvalidArgument("unknown weight mode '" + text + "' (expected ws or wc)");
}

std::string to_string(StepKind kind) {
  switch (kind) {
    case StepKind::gradient: return "gradient";
    case StepKind::least_squares: return "least-squares";
    case StepKind::deblur: return "deblur-ls";
  }
  return "unknown";
}

StepKind parse_step_kind(const std::string& text) {
  if (text == "gradient") return StepKind::gradient;
  if (text == "least-squares" || text == "ls") return StepKind::least_squares;
  if (text == "deblur-ls" || text == "deblur") return StepKind::deblur;
  throw InvalidArgument("unknown step kind '" + text + "'");
}

ProximalStack::ProximalStack(WeightMode mode, Index iterations, bool symmetric,
                             std::vector<WeightSet> sets)
    : mode_(mode), iterations_(iterations), symmetric_(symmetric), sets_(std::move(sets)) {
  if (iterations_ < 1) throw InvalidArgument("proximal stack: T must be at least 1");
  const std::size_t expected_sets = mode_ == WeightMode::shared ? 1 : static_cast<std::size_t>(iterations_);
  if (sets_.size() != expected_sets)
    throw DimensionError("proximal stack: weight set count", expected_sets, sets_.size());
  if (sets_.front().empty()) throw InvalidArgument("proximal stack: K must be at least 1");
  const Index n = sets_.front().front().w.cols();
  if (n < 1) throw InvalidArgument("proximal stack: n must be at least 1");
  const auto& reference = sets_.front();
  for (const auto& set : sets_) {
    if (set.size() != reference.size())
      throw DimensionError("proximal stack: layer count", reference.size(), set.size());
    for (std::size_t k = 0; k < set.size(); ++k) {
      const auto& layer = set[k];
      if (layer.w.cols() != n)
        throw DimensionError("proximal stack: layer input size", static_cast<std::size_t>(n),
                             static_cast<std::size_t>(layer.w.cols()));
      if (layer.w.rows() != reference[k].w.rows())
        throw DimensionError("proximal stack: layer width", static_cast<std::size_t>(reference[k].w.rows()),
                             static_cast<std::size_t>(layer.w.rows()));
      if (layer.w.rows() < 1) throw InvalidArgument("proximal stack: empty layer");
      if (symmetric_) {
        if (layer.w_bar.size() != 0)
          throw InvalidArgument("proximal stack: symmetric layers must not store W_bar");
      } else if (layer.w_bar.rows() != layer.w.rows() || layer.w_bar.cols() != n) {
        throw DimensionError("proximal stack: W_bar shape must match W");
      }
    }
  }
}

ProximalStack ProximalStack::zeros(WeightMode mode, Index n, Index iterations,
                                   const std::vector<Index>& widths, bool symmetric) {
  if (n < 1) throw InvalidArgument("proximal stack: n must be at least 1");
  if (iterations < 1) throw InvalidArgument("proximal stack: T must be at least 1");
  WeightSet set;
  for (Index width : widths) {
    ResidualLayer layer{Matrix::Zero(width, n), symmetric ? Matrix() : Matrix(Matrix::Zero(width, n))};
    set.push_back(std::move(layer));
  }
  const std::size_t count = mode == WeightMode::shared ? 1 : static_cast<std::size_t>(iterations);
  return ProximalStack(mode, iterations, symmetric, std::vector<WeightSet>(count, set));
}

ProximalStack ProximalStack::gaussian(WeightMode mode, Index n, Index iterations,
                                      const std::vector<Index>& widths, bool symmetric,
                                      double std_dev, std::uint64_t seed) {
  ProximalStack stack = zeros(mode, n, iterations, widths, symmetric);
  for (std::size_t s = 0; s < stack.sets_.size(); ++s) {
    Rng rng(derive_seed(seed, s));
    for (auto& layer : stack.sets_[s]) {
      layer.w = std_dev * rng.normal_matrix(layer.w.rows(), layer.w.cols());
      if (!symmetric) layer.w_bar = std_dev * rng.normal_matrix(layer.w.rows(), layer.w.cols());
    }
  }
  return stack;
}

std::vector<Index> ProximalStack::widths() const {
  std::vector<Index> out;
  for (const auto& layer : sets_.front()) out.push_back(layer.width());
  return out;
}

const WeightSet& ProximalStack::weights_for_iteration(Index t) const {
  if (t < 0 || t >= iterations_) throw InvalidArgument("proximal stack: iteration out of range");
  return mode_ == WeightMode::shared ? sets_.front() : sets_[static_cast<std::size_t>(t)];
}

ProximalStack ProximalStack::untied() const {
  if (mode_ == WeightMode::changing) return *this;
  return ProximalStack(WeightMode::changing, iterations_, symmetric_,
                       std::vector<WeightSet>(static_cast<std::size_t>(iterations_), sets_.front()));
}

Index ProximalStack::parameter_count() const {
  Index count = 0;
  for (const auto& set : sets_)
    for (const auto& layer : set) count += layer.w.size() + layer.w_bar.size();
  return count;
}

bool ProximalStack::operator==(const ProximalStack& other) const {
  if (mode_ != other.mode_ || iterations_ != other.iterations_ || symmetric_ != other.symmetric_ ||
      sets_.size() != other.sets_.size())
    return false;
  for (std::size_t s = 0; s < sets_.size(); ++s) {
    if (sets_[s].size() != other.sets_[s].size()) return false;
    for (std::size_t k = 0; k < sets_[s].size(); ++k) {
      const auto& a = sets_[s][k];
      const auto& b = other.sets_[s][k];
      if (a.w.rows() != b.w.rows() || a.w.cols() != b.w.cols() || a.w != b.w) return false;
      if (a.w_bar.size() != b.w_bar.size() || (a.w_bar.size() > 0 && a.w_bar != b.w_bar)) return false;
    }
  }
  return true;
}

namespace {

void check_alpha(double alpha, StepKind kind) {
  if (!std::isfinite(alpha)) throw InvalidArgument("step size alpha must be finite");
  if (kind == StepKind::least_squares && (alpha < 0.0 || alpha > 1.0))
    throw InvalidArgument("least-squares step: alpha must lie in [0, 1]");
  if (kind == StepKind::deblur && !(alpha > 0.0))
    throw InvalidArgument("deblur step: alpha must be positive");
}

// System matrix of the least-squares kinds, checked for numerical rank.
Matrix system_matrix(const SensingOperator& op, double alpha, StepKind kind) {
  const Index n = op.n();
  Matrix s = kind == StepKind::least_squares
                 ? Matrix(alpha * op.gram() + (1.0 - alpha) * Matrix::Identity(n, n))
                 : Matrix(op.gram() + alpha * Matrix::Identity(n, n));
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s, Eigen::EigenvaluesOnly);
  const double largest = eig.eigenvalues().cwiseAbs().maxCoeff();
  const double smallest = eig.eigenvalues().minCoeff();
  if (!(smallest > 1e-12 * std::max(1.0, largest))) {
    throw SingularSystemError("least-squares step: system matrix is numerically rank deficient "
                              "(smallest eigenvalue " + std::to_string(smallest) + ")");
  }
  return s;
}

}  // namespace

Vector gradient_step(const Vector& x, const Vector& y, const SensingOperator& op, double alpha) {
  check_alpha(alpha, StepKind::gradient);
  require_length(x, op.n(), "gradient step: x");
  require_length(y, op.output_length(), "gradient step: y");
  if (alpha == 0.0) return x;
  return alpha * op.adjoint(y) + x - alpha * op.adjoint(op.forward(x));
}

Vector least_squares_step(const Vector& x, const Vector& y, const SensingOperator& op,
                          double alpha, StepKind kind) {
  if (kind == StepKind::gradient) return gradient_step(x, y, op, alpha);
  check_alpha(alpha, kind);
  require_length(x, op.n(), "least-squares step: x");
  require_length(y, op.output_length(), "least-squares step: y");
  const Matrix s = system_matrix(op, alpha, kind);
  const Vector rhs = kind == StepKind::least_squares
                         ? Vector(alpha * op.adjoint(y) + (1.0 - alpha) * x)
                         : Vector(op.adjoint(y) + alpha * x);
  return s.ldlt().solve(rhs);
}

DataConsistency::DataConsistency(const SensingOperator& op, StepParams step) {
  check_alpha(step.alpha, step.kind);
  const Index n = op.n();
  const bool identity = op.kind() == OperatorKind::identity;
  const double a = step.alpha;
  if (step.kind == StepKind::gradient) {
    state_jac_ = Matrix::Identity(n, n) - a * op.gram();
    meas_jac_ = a * op.matrix().transpose();
    state_is_scalar_ = identity || a == 0.0;
    state_scale_ = identity ? 1.0 - a : 1.0;
    return;
  }
  const Matrix s = system_matrix(op, a, step.kind);
  const Matrix inverse = s.ldlt().solve(Matrix::Identity(n, n));
  const double state_weight = step.kind == StepKind::least_squares ? 1.0 - a : a;
  const double meas_weight = step.kind == StepKind::least_squares ? a : 1.0;
  state_jac_ = state_weight * inverse;
  meas_jac_ = meas_weight * inverse * op.matrix().transpose();
  if (identity) {
    // S is a multiple of I, so both maps are exact scalings.
    const double c = step.kind == StepKind::least_squares ? 1.0 : 1.0 + a;
    state_is_scalar_ = true;
    state_scale_ = state_weight / c;
    state_jac_ = state_scale_ * Matrix::Identity(n, n);
    meas_jac_ = (meas_weight / c) * Matrix::Identity(n, n);
  }
}

Vector DataConsistency::measurement_term(const Vector& y) const {
  require_length(y, meas_jac_.cols(), "data consistency: y");
  return meas_jac_ * y;
}

Vector DataConsistency::apply(const Vector& x, const Vector& b) const {
  if (state_is_scalar_) return state_scale_ == 1.0 ? Vector(x + b) : Vector(state_scale_ * x + b);
  return state_jac_ * x + b;
}

Vector DataConsistency::apply_state_transpose(const Vector& g) const {
  if (state_is_scalar_) return state_scale_ == 1.0 ? g : Vector(state_scale_ * g);
  return state_jac_.transpose() * g;
}

UnitOutput residual_unit_forward(const Vector& h, const ResidualLayer& layer, bool symmetric) {
  require_length(h, layer.w.cols(), "residual unit: h");
  const Matrix& analysis = symmetric ? layer.w : layer.w_bar;
  if (!symmetric && (layer.w_bar.rows() != layer.w.rows() || layer.w_bar.cols() != layer.w.cols()))
    throw DimensionError("residual unit: W and W_bar shapes differ");
  UnitOutput out;
  out.pre_activation = analysis * h;
  out.mask = (out.pre_activation.array() > 0.0).cast<double>().matrix();
  const Vector active = out.mask.cwiseProduct(out.pre_activation);
  out.h = symmetric ? Vector(h - layer.w.transpose() * active) : Vector(h + layer.w.transpose() * active);
  return out;
}

Matrix unit_jacobian(const ResidualLayer& layer, const Mask& mask, bool symmetric) {
  require_length(mask, layer.w.rows(), "unit jacobian: mask");
  const Index n = layer.w.cols();
  const Matrix masked = mask.asDiagonal() * (symmetric ? layer.w : layer.w_bar);
  return symmetric ? Matrix(Matrix::Identity(n, n) - layer.w.transpose() * masked)
                   : Matrix(Matrix::Identity(n, n) + layer.w.transpose() * masked);
}

double ForwardTrace::min_margin() const {
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& per_t : pre_activations)
    for (const auto& z : per_t)
      if (z.size() > 0) margin = std::min(margin, z.cwiseAbs().minCoeff());
  return margin;
}

namespace {

ForwardResult run_forward(const Vector& y, const ProximalStack& stack, const SensingOperator& op,
                          const DataConsistency& dc, ForwardOptions options) {
  if (stack.n() != op.n())
    throw DimensionError("unroll: stack input size", static_cast<std::size_t>(op.n()),
                         static_cast<std::size_t>(stack.n()));
  require_length(y, op.output_length(), "unroll: y");
  ForwardResult result;
  ForwardTrace& trace = result.trace;
  Vector x = op.adjoint(y);
  const Vector b = dc.measurement_term(y);
  if (options.record) trace.states.push_back(x);
  const bool symmetric = stack.symmetric();
  for (Index t = 0; t < stack.iterations(); ++t) {
    Vector h = dc.apply(x, b);
    const WeightSet& set = stack.weights_for_iteration(t);
    if (options.record) {
      trace.pre_proximal.push_back(h);
      trace.layer_inputs.emplace_back();
      trace.masks.emplace_back();
      trace.pre_activations.emplace_back();
    }
    for (const auto& layer : set) {
      UnitOutput unit = residual_unit_forward(h, layer, symmetric);
      if (options.record) {
        trace.layer_inputs.back().push_back(std::move(h));
        trace.masks.back().push_back(std::move(unit.mask));
        trace.pre_activations.back().push_back(std::move(unit.pre_activation));
      }
      h = std::move(unit.h);
    }
    if (options.record) {
      if (!trace.converged && (h - x).norm() < options.convergence_tol) {
        trace.converged = true;
        trace.converged_at = t + 1;
      }
      trace.states.push_back(h);
    }
    x = std::move(h);
  }
  result.output = std::move(x);
  return result;
}

}  // namespace

ForwardResult unroll_forward(const Vector& y, const ProximalStack& stack, const SensingOperator& op,
                             StepParams step, ForwardOptions options) {
  const DataConsistency dc(op, step);
  return run_forward(y, stack, op, dc, options);
}

UnrolledNetwork::UnrolledNetwork(ProximalStack stack, SensingOperator op, StepParams step)
    : stack_(std::move(stack)), op_(std::move(op)), step_(step), dc_(op_, step_) {
  if (stack_.n() != op_.n())
    throw DimensionError("network: stack input size", static_cast<std::size_t>(op_.n()),
                         static_cast<std::size_t>(stack_.n()));
}

ForwardResult UnrolledNetwork::forward(const Vector& y, ForwardOptions options) const {
  return run_forward(y, stack_, op_, dc_, options);
}

}  // namespace sunroll
