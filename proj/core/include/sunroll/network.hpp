#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sunroll/linalg.hpp"
#include "sunroll/sensing_operator.hpp"

namespace sunroll {

// ws: one weight set reused by every outer iteration; wc: one set per iteration.
enum class WeightMode { shared, changing };

std::string to_string(WeightMode mode);
WeightMode parse_weight_mode(const std::string& text);

// One residual unit h -> h + W^T relu(W_bar h). In a symmetric stack only W is
// stored and the unit is h -> h - W^T relu(W h), i.e. (I - W^T D W) h.
struct ResidualLayer {
  Matrix w;
  Matrix w_bar;  // empty when the owning stack is symmetric

  Index width() const { return w.rows(); }
};

using WeightSet = std::vector<ResidualLayer>;

// Trainable weights of the unrolled proximal network.
class ProximalStack {
 public:
  ProximalStack(WeightMode mode, Index iterations, bool symmetric, std::vector<WeightSet> sets);

  static ProximalStack zeros(WeightMode mode, Index n, Index iterations,
                             const std::vector<Index>& widths, bool symmetric);
  // i.i.d. Gaussian weights with the given standard deviation. Each weight set
  // draws from its own seed stream.
  static ProximalStack gaussian(WeightMode mode, Index n, Index iterations,
                                const std::vector<Index>& widths, bool symmetric,
                                double std_dev, std::uint64_t seed);

  WeightMode mode() const { return mode_; }
  Index iterations() const { return iterations_; }
  Index layers() const { return static_cast<Index>(sets_.front().size()); }
  Index n() const { return sets_.front().front().w.cols(); }
  bool symmetric() const { return symmetric_; }
  std::vector<Index> widths() const;

  // Weights applied at outer iteration t (0-based).
  const WeightSet& weights_for_iteration(Index t) const;
  std::span<const WeightSet> weight_sets() const { return sets_; }
  // Write access for optimizer updates. Shapes must not be changed.
  WeightSet& mutable_weight_set(std::size_t i) { return sets_.at(i); }

  // Weight-changing copy whose T sets all equal the shared set.
  ProximalStack untied() const;
  Index parameter_count() const;

  bool operator==(const ProximalStack& other) const;

 private:
  WeightMode mode_;
  Index iterations_;
  bool symmetric_;
  std::vector<WeightSet> sets_;
};

enum class StepKind { gradient, least_squares, deblur };

std::string to_string(StepKind kind);
StepKind parse_step_kind(const std::string& text);

// Data-consistency step parameters. alpha = 0 with the gradient kind is a no-op.
struct StepParams {
  double alpha = 0.0;
  StepKind kind = StepKind::gradient;
  bool operator==(const StepParams&) const = default;
};

// alpha Phi^T y + (I - alpha Phi^T Phi) x
Vector gradient_step(const Vector& x, const Vector& y, const SensingOperator& op, double alpha);

// least_squares: (alpha Phi^T Phi + (1 - alpha) I)^{-1} (alpha Phi^T y + (1 - alpha) x)
// deblur:        (Phi^T Phi + alpha I)^{-1} (Phi^T y + alpha x)
Vector least_squares_step(const Vector& x, const Vector& y, const SensingOperator& op,
                          double alpha, StepKind kind);

// Affine data-consistency map s = G_x x + G_y y with both Jacobians
// precomputed. Construction validates alpha and factorizes the system once.
class DataConsistency {
 public:
  DataConsistency(const SensingOperator& op, StepParams step);

  // G_y y; computed once per forward pass.
  Vector measurement_term(const Vector& y) const;
  // G_x x + b where b = measurement_term(y).
  Vector apply(const Vector& x, const Vector& b) const;
  // G_x^T g, used by reverse-mode passes.
  Vector apply_state_transpose(const Vector& g) const;

  const Matrix& state_jacobian() const { return state_jac_; }
  const Matrix& measurement_jacobian() const { return meas_jac_; }
  // True when G_x = c I; c is state_scale().
  bool state_is_scalar() const { return state_is_scalar_; }
  double state_scale() const { return state_scale_; }

 private:
  Matrix state_jac_;
  Matrix meas_jac_;
  bool state_is_scalar_ = false;
  double state_scale_ = 1.0;
};

using Mask = Vector;  // entries exactly 0.0 or 1.0

struct UnitOutput {
  Vector h;
  Mask mask;
  Vector pre_activation;
};

// Applies one residual unit. The ReLU is inactive at exactly zero.
UnitOutput residual_unit_forward(const Vector& h, const ResidualLayer& layer, bool symmetric);

// Jacobian of one residual unit with its mask frozen.
Matrix unit_jacobian(const ResidualLayer& layer, const Mask& mask, bool symmetric);

// Everything recorded during one forward pass.
struct ForwardTrace {
  std::vector<Vector> states;                        // x^0 .. x^T
  std::vector<Vector> pre_proximal;                  // s^1 .. s^T
  std::vector<std::vector<Vector>> layer_inputs;     // [t][k] = h^t_k, h^t_0 = s^t
  std::vector<std::vector<Mask>> masks;              // [t][k] = diag(D^t_k)
  std::vector<std::vector<Vector>> pre_activations;  // [t][k] = W_bar h (or W h)
  bool converged = false;
  Index converged_at = -1;  // first t with |x^t - x^{t-1}| < tol

  Index iterations() const { return static_cast<Index>(pre_proximal.size()); }
  // Smallest |pre-activation| over every unit; distance to a mask flip.
  double min_margin() const;
};

struct ForwardResult {
  Vector output;
  ForwardTrace trace;  // empty unless recording was requested
};

struct ForwardOptions {
  bool record = false;
  double convergence_tol = 1e-10;
};

ForwardResult unroll_forward(const Vector& y, const ProximalStack& stack, const SensingOperator& op,
                             StepParams step, ForwardOptions options = {});

// Stack + operator + step bundled with the precomputed data-consistency map.
// Immutable and safe to share between threads.
class UnrolledNetwork {
 public:
  UnrolledNetwork(ProximalStack stack, SensingOperator op, StepParams step);

  ForwardResult forward(const Vector& y, ForwardOptions options = {}) const;
  Vector operator()(const Vector& y) const { return forward(y).output; }

  const ProximalStack& stack() const { return stack_; }
  const SensingOperator& op() const { return op_; }
  const StepParams& step() const { return step_; }
  const DataConsistency& data_consistency() const { return dc_; }

 private:
  ProximalStack stack_;
  SensingOperator op_;
  StepParams step_;
  DataConsistency dc_;
};

}  // namespace sunroll
