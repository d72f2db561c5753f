#include "sunroll/jacobian.hpp"

#include <cmath>
#include <functional>

namespace sunroll {

namespace {

void check_trace_matches(const ForwardTrace& trace, const ProximalStack& stack) {
  if (trace.iterations() != stack.iterations())
    throw DimensionError("jacobian: trace iteration count", static_cast<std::size_t>(stack.iterations()),
                         static_cast<std::size_t>(trace.iterations()));
  for (Index t = 0; t < stack.iterations(); ++t) {
    const auto& set = stack.weights_for_iteration(t);
    const auto& masks = trace.masks[static_cast<std::size_t>(t)];
    if (masks.size() != set.size())
      throw DimensionError("jacobian: trace layer count", set.size(), masks.size());
    for (std::size_t k = 0; k < set.size(); ++k)
      require_length(masks[k], set[k].width(), "jacobian: stale trace mask");
  }
}

}  // namespace

Matrix accumulate_jacobian(const ForwardTrace& trace, const ProximalStack& stack,
                           const SensingOperator& op, StepParams step) {
  return accumulate_jacobian(trace, UnrolledNetwork(stack, op, step));
}

Matrix accumulate_jacobian(const ForwardTrace& trace, const UnrolledNetwork& net) {
  const ProximalStack& stack = net.stack();
  check_trace_matches(trace, stack);
  const DataConsistency& dc = net.data_consistency();
  Matrix jac = net.op().matrix().transpose();
  const bool symmetric = stack.symmetric();
  for (Index t = 0; t < stack.iterations(); ++t) {
    if (dc.state_is_scalar()) {
      jac = dc.state_scale() * jac + dc.measurement_jacobian();
    } else {
      jac = dc.state_jacobian() * jac + dc.measurement_jacobian();
    }
    const auto& set = stack.weights_for_iteration(t);
    const auto& masks = trace.masks[static_cast<std::size_t>(t)];
    for (std::size_t k = 0; k < set.size(); ++k) {
      const auto& layer = set[k];
      const Matrix& analysis = symmetric ? layer.w : layer.w_bar;
      const Matrix inner = masks[k].asDiagonal() * (analysis * jac);
      if (symmetric) {
        jac.noalias() -= layer.w.transpose() * inner;
      } else {
        jac.noalias() += layer.w.transpose() * inner;
      }
    }
  }
  return jac;
}

double jacobian_trace(const Matrix& jacobian) {
  if (jacobian.rows() != jacobian.cols())
    throw DimensionError("jacobian trace: matrix is not square");
  return jacobian.trace();
}

Incoherence incoherence(const Matrix& w) {
  if (w.size() == 0) throw InvalidArgument("incoherence: empty matrix");
  if (w.rows() < 2) return {0.0, false};
  const Matrix gram = w * w.transpose();
  double mu = 0.0;
  for (Index i = 0; i < gram.rows(); ++i)
    for (Index j = 0; j < gram.cols(); ++j)
      if (i != j) mu = std::max(mu, std::abs(gram(i, j)));
  return {mu, true};
}

Vector norm_matrix_b(const Matrix& w) { return w.rowwise().squaredNorm(); }

std::vector<PathTerm> path_expansion(std::span<const Mask> masks, const Matrix& w,
                                     Index max_iterations) {
  const Index iterations = static_cast<Index>(masks.size());
  if (iterations < 1) throw InvalidArgument("path expansion: no iterations");
  if (iterations > max_iterations || iterations > 30) {
    throw UnsupportedError("path expansion: T = " + std::to_string(iterations) + " exceeds the cap of " +
                           std::to_string(max_iterations) + " (2^T paths)");
  }
  const Index width = w.rows();
  for (const auto& m : masks) require_length(m, width, "path expansion: mask");

  const Incoherence mu = incoherence(w);
  const Vector b = norm_matrix_b(w);
  std::vector<double> sparsity(static_cast<std::size_t>(iterations));
  for (Index t = 0; t < iterations; ++t) sparsity[static_cast<std::size_t>(t)] = masks[static_cast<std::size_t>(t)].sum();

  // The path trace is cyclic, so it can be evaluated on the l x l side
  // (D_i W W^T products) or the n x n side (W^T D_i W products); pick the
  // smaller one.
  const bool row_side = width <= w.cols();
  const Matrix gram = w * w.transpose();
  std::vector<Matrix> factors(static_cast<std::size_t>(iterations));
  for (Index t = 0; t < iterations; ++t) {
    const auto& d = masks[static_cast<std::size_t>(t)];
    factors[static_cast<std::size_t>(t)] =
        row_side ? Matrix(d.asDiagonal() * gram) : Matrix(w.transpose() * d.asDiagonal() * w);
  }

  const std::size_t count = (std::size_t{1} << iterations) - 1;
  std::vector<PathTerm> terms(count);
  std::vector<Index> indices;
  const Index dim = row_side ? width : w.cols();
  std::function<void(const Matrix&, const Vector&, Index, std::size_t)> extend =
      [&](const Matrix& product, const Vector& cascade, Index next, std::size_t bits) {
        for (Index t = next; t < iterations; ++t) {
          const auto& factor = factors[static_cast<std::size_t>(t)];
          const Matrix extended = factor * product;
          const Vector joint = cascade.cwiseProduct(masks[static_cast<std::size_t>(t)]);
          const std::size_t key = bits | (std::size_t{1} << t);
          indices.push_back(t + 1);

          PathTerm& term = terms[key - 1];
          term.indices = indices;
          term.trace_exact = extended.trace();
          const double order = static_cast<double>(indices.size());
          term.path_sparsity = joint.cwiseProduct(b.array().pow(order).matrix()).sum();
          double bound = 1.0;
          for (Index i : indices) {
            const double s = sparsity[static_cast<std::size_t>(i - 1)];
            term.sparsities.push_back(s);
            bound *= std::sqrt(s) * (s - 1.0) * mu.value;
          }
          term.lemma4_bound = std::max(0.0, bound);

          extend(extended, joint, t + 1, key);
          indices.pop_back();
        }
      };
  extend(Matrix::Identity(dim, dim), Vector::Ones(width), 0, 0);
  return terms;
}

std::vector<PathTerm> path_expansion(const ForwardTrace& trace, const ProximalStack& stack,
                                     Index max_iterations) {
  if (!stack.symmetric() || stack.layers() != 1)
    throw UnsupportedError("path expansion requires a symmetric stack with a single residual unit");
  if (stack.mode() != WeightMode::shared)
    throw UnsupportedError("path expansion requires weight sharing (one W for every iteration)");
  check_trace_matches(trace, stack);
  std::vector<Mask> masks;
  for (const auto& per_t : trace.masks) masks.push_back(per_t.front());
  return path_expansion(masks, stack.weight_sets().front().front().w, max_iterations);
}

Lemma4Check lemma4_deviation(const PathTerm& term) {
  Lemma4Check check;
  check.deviation = std::abs(term.trace_exact - term.path_sparsity);
  check.bound = term.lemma4_bound;
  check.satisfied = check.deviation <= check.bound + 1e-12;
  return check;
}

double theorem1_bound(double epsilon, Index iterations) {
  if (epsilon < 0.0) throw InvalidArgument("theorem1 bound: epsilon must be >= 0");
  // sum_{k>=2} C(T, k) eps^k, free of the cancellation in the closed form
  double sum = 0.0;
  double term = 1.0;
  for (Index k = 1; k <= iterations; ++k) {
    term *= epsilon * static_cast<double>(iterations - k + 1) / static_cast<double>(k);
    if (k >= 2) sum += term;
  }
  return sum;
}

DofSurrogate dof_surrogate(std::span<const PathTerm> paths, Index n, double mu_w,
                           std::span<const double> rho) {
  if (paths.empty()) throw InvalidArgument("dof surrogate: empty path list");
  if (rho.empty()) throw InvalidArgument("dof surrogate: empty sparsity list");
  DofSurrogate out;
  double sum = static_cast<double>(n);
  for (const auto& term : paths) sum += term.sign() * term.path_sparsity;
  out.surrogate = sum;
  double rho_max = 0.0;
  for (double r : rho) rho_max = std::max(rho_max, r);
  out.epsilon = mu_w * std::pow(rho_max, 1.5);
  out.bound = theorem1_bound(out.epsilon, static_cast<Index>(rho.size()));
  out.valid = out.epsilon < 1.0;
  return out;
}

namespace {

void finish_report(JacobianReport& report) {
  const DofSurrogate s = dof_surrogate(report.paths, report.n, report.mu_w, report.rho);
  report.surrogate = s.surrogate;
  report.epsilon = s.epsilon;
  report.bound = s.bound;
  report.valid = s.valid;
}

}  // namespace

bool path_expansion_applicable(const UnrolledNetwork& net) {
  const ProximalStack& stack = net.stack();
  const StepParams& step = net.step();
  return net.op().kind() == OperatorKind::identity && step.kind == StepKind::gradient && step.alpha == 0.0 &&
         stack.symmetric() && stack.layers() == 1 && stack.mode() == WeightMode::shared;
}

JacobianReport analyze_jacobian(const UnrolledNetwork& net, const Vector& y, Index max_iterations) {
  const Vector inputs[] = {y};
  JacobianReport report = analyze_jacobian_expected(net, inputs, max_iterations);
  return report;
}

JacobianReport analyze_jacobian_expected(const UnrolledNetwork& net, std::span<const Vector> inputs,
                                         Index max_iterations) {
  if (inputs.empty()) throw InvalidArgument("jacobian analysis: empty evaluation set");
  if (!path_expansion_applicable(net))
    throw UnsupportedError(
        "jacobian analysis: path expansion needs a symmetric single-layer weight-sharing denoiser "
        "(identity operator, gradient step with alpha = 0)");
  const ProximalStack& stack = net.stack();
  JacobianReport report;
  report.n = stack.n();
  report.iterations = stack.iterations();
  report.samples = static_cast<Index>(inputs.size());
  report.rho.assign(static_cast<std::size_t>(stack.iterations()), 0.0);
  const double weight = 1.0 / static_cast<double>(inputs.size());
  const Matrix& w = stack.weight_sets().front().front().w;
  report.mu_w = incoherence(w).value;

  for (const Vector& y : inputs) {
    const ForwardResult fwd = net.forward(y, {.record = true});
    Matrix jac = accumulate_jacobian(fwd.trace, net);
    report.trace += weight * jacobian_trace(jac);
    if (inputs.size() == 1) report.jacobian = std::move(jac);
    for (Index t = 0; t < stack.iterations(); ++t)
      report.rho[static_cast<std::size_t>(t)] += weight * fwd.trace.masks[static_cast<std::size_t>(t)].front().sum();
    std::vector<PathTerm> terms = path_expansion(fwd.trace, stack, max_iterations);
    if (report.paths.empty()) {
      report.paths = std::move(terms);
      for (auto& term : report.paths) {
        term.trace_exact *= weight;
        term.path_sparsity *= weight;
        term.lemma4_bound *= weight;
        for (auto& s : term.sparsities) s *= weight;
      }
      continue;
    }
    for (std::size_t i = 0; i < terms.size(); ++i) {
      auto& acc = report.paths[i];
      acc.trace_exact += weight * terms[i].trace_exact;
      acc.path_sparsity += weight * terms[i].path_sparsity;
      acc.lemma4_bound += weight * terms[i].lemma4_bound;
      for (std::size_t l = 0; l < acc.sparsities.size(); ++l) acc.sparsities[l] += weight * terms[i].sparsities[l];
    }
  }
  finish_report(report);
  return report;
}

nlohmann::json to_json(const JacobianReport& report) {
  nlohmann::json paths = nlohmann::json::array();
  for (const auto& term : report.paths) {
    paths.push_back({{"I", term.indices},
                     {"trace", term.trace_exact},
                     {"p", term.path_sparsity},
                     {"bound", term.lemma4_bound}});
  }
  return {{"n", report.n},           {"T", report.iterations}, {"trace", report.trace},
          {"mu_w", report.mu_w},     {"rho", report.rho},      {"epsilon", report.epsilon},
          {"surrogate", report.surrogate}, {"bound", report.bound}, {"valid", report.valid},
          {"samples", report.samples}, {"paths", paths}};
}

}  // namespace sunroll
