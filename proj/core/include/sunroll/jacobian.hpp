#pragma once

#include <nlohmann/json.hpp>

#include <span>
#include <vector>

#include "sunroll/network.hpp"

namespace sunroll {

// dh/dy of the unrolled map with every activation mask frozen at its recorded
// value. Shape n x output_length(); square for identity/blur/square dense.
//   J^0 = Phi^T,  J^t = M_t (G_x J^{t-1} + G_y)
Matrix accumulate_jacobian(const ForwardTrace& trace, const ProximalStack& stack,
                           const SensingOperator& op, StepParams step);
Matrix accumulate_jacobian(const ForwardTrace& trace, const UnrolledNetwork& net);

// Diagonal sum; throws DimensionError for non-square input.
double jacobian_trace(const Matrix& jacobian);

struct Incoherence {
  double value = 0.0;
  bool defined = false;  // false when W has a single row
};

// max_{i != j} |[W W^T]_{ij}|
Incoherence incoherence(const Matrix& w);

// Squared row norms, i.e. the diagonal of W W^T.
Vector norm_matrix_b(const Matrix& w);

// One term of the 2^T path expansion of the symmetric single-unit Jacobian.
struct PathTerm {
  std::vector<Index> indices;      // 1-based iterations, ascending
  double trace_exact = 0.0;        // tr(W^T D_{i_j} W ... W^T D_{i_1} W)
  double path_sparsity = 0.0;      // tr(D_I B^{|I|})
  double lemma4_bound = 0.0;       // prod_l sqrt(s_l) (s_l - 1) mu_W
  std::vector<double> sparsities;  // tr(D_{i_l}) along the path

  int sign() const { return indices.size() % 2 == 0 ? 1 : -1; }
};

inline constexpr Index kDefaultPathCap = 14;

// Enumerates every nonempty I subset of {1..T} for masks D_1..D_T and a single
// weight matrix W. Cost is O(2^T min(l, n)^3); T above `max_iterations` is
// refused rather than truncated.
std::vector<PathTerm> path_expansion(std::span<const Mask> masks, const Matrix& w,
                                     Index max_iterations = kDefaultPathCap);
// Same, reading masks from a trace. Requires a symmetric stack with K = 1 in
// weight-sharing mode.
std::vector<PathTerm> path_expansion(const ForwardTrace& trace, const ProximalStack& stack,
                                     Index max_iterations = kDefaultPathCap);

struct Lemma4Check {
  double deviation = 0.0;
  double bound = 0.0;
  bool satisfied = false;
};

Lemma4Check lemma4_deviation(const PathTerm& term);

// (1 + eps)^T - 1 - eps T
double theorem1_bound(double epsilon, Index iterations);

struct DofSurrogate {
  double surrogate = 0.0;  // n + sum_I (-1)^{|I|} p_I
  double epsilon = 0.0;    // mu_W (max_t rho_t)^{3/2}
  double bound = 0.0;
  bool valid = false;      // epsilon < 1
};

DofSurrogate dof_surrogate(std::span<const PathTerm> paths, Index n, double mu_w,
                           std::span<const double> rho);

struct JacobianReport {
  Index n = 0;
  Index iterations = 0;
  Matrix jacobian;
  double trace = 0.0;
  std::vector<PathTerm> paths;
  double mu_w = 0.0;
  std::vector<double> rho;  // per-iteration sparsity tr(D_t) (mean over inputs)
  double epsilon = 0.0;
  double surrogate = 0.0;
  double bound = 0.0;
  bool valid = false;
  Index samples = 1;
};

// True when the end-to-end Jacobian is the plain product of unit Jacobians
// (identity operator, gradient step with alpha = 0) and the stack is a
// symmetric single-layer weight-sharing network, so the path expansion
// applies.
bool path_expansion_applicable(const UnrolledNetwork& net);

// Report for a single input y.
JacobianReport analyze_jacobian(const UnrolledNetwork& net, const Vector& y,
                                Index max_iterations = kDefaultPathCap);

// Expectations realized as means over an evaluation set: trace, path traces,
// path sparsities, Lemma 4 bounds and rho are averaged across inputs.
JacobianReport analyze_jacobian_expected(const UnrolledNetwork& net, std::span<const Vector> inputs,
                                         Index max_iterations = kDefaultPathCap);

// {n, T, trace, mu_w, rho[], epsilon, surrogate, bound, paths:[{I, trace, p, bound}]}
nlohmann::json to_json(const JacobianReport& report);

}  // namespace sunroll
