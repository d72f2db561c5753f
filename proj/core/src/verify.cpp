#include "sunroll/verify.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "sunroll/dataset.hpp"
#include "sunroll/error.hpp"
#include "sunroll/fixed_point.hpp"
#include "sunroll/jacobian.hpp"
#include "sunroll/pca.hpp"
#include "sunroll/random.hpp"
#include "sunroll/sure.hpp"
#include "sunroll/training.hpp"

namespace sunroll {

namespace {

// Tracks the worst check of a verification run.
struct Tally {
  double max_violation = 0.0;
  double max_deviation = 0.0;
  Index checks = 0;
  Index failures = 0;

  // deviation against an allowance; the slack is added to the allowance.
  void check(double deviation, double allowance, double slack) {
    ++checks;
    max_deviation = std::max(max_deviation, deviation);
    const double excess = deviation - allowance - slack;
    if (!(excess <= 0.0)) {
      ++failures;
      max_violation = std::max(max_violation, std::isfinite(excess) ? excess : HUGE_VAL);
    }
  }
  void fail(double amount) {
    ++checks;
    ++failures;
    max_violation = std::max(max_violation, amount);
  }
};

VerifyReport finish(VerifyCommand command, const VerifyParams& p, const Tally& tally, nlohmann::json details) {
  VerifyReport r;
  r.command = command;
  r.trials = p.trials;
  r.params = p;
  r.tolerance = p.tolerance;
  r.max_violation = tally.max_violation;
  r.max_deviation = tally.max_deviation;
  r.pass = tally.failures == 0 && tally.checks > 0;
  details["checks"] = tally.checks;
  details["failures"] = tally.failures;
  r.details = std::move(details);
  return r;
}

UnrolledNetwork single_layer_denoiser(const Matrix& w, Index iterations) {
  std::vector<WeightSet> sets{WeightSet{ResidualLayer{w, Matrix()}}};
  return UnrolledNetwork(ProximalStack(WeightMode::shared, iterations, true, std::move(sets)),
                         SensingOperator::identity(w.cols()), StepParams{});
}

std::vector<Vector> gaussian_inputs(Index count, Index n, std::uint64_t seed) {
  std::vector<Vector> out;
  for (Index i = 0; i < count; ++i) out.push_back(Rng(derive_seed(seed, static_cast<std::uint64_t>(i))).normal_vector(n));
  return out;
}

Matrix hadamard(Index n) {
  Matrix h = Matrix::Ones(1, 1);
  while (h.rows() < n) {
    const Index m = h.rows();
    Matrix next(2 * m, 2 * m);
    next << h, h, h, -h;
    h = std::move(next);
  }
  return h;
}

}  // namespace

std::string to_string(VerifyCommand command) {
  switch (command) {
    case VerifyCommand::lemma2: return "lemma2";
    case VerifyCommand::lemma3: return "lemma3";
    case VerifyCommand::lemma4: return "lemma4";
    case VerifyCommand::theorem1: return "theorem1";
    case VerifyCommand::jacobian: return "jacobian";
    case VerifyCommand::sure_unbiased: return "sure-unbiased";
  }
  return "unknown";
}

const std::vector<VerifyCommand>& all_verify_commands() {
  static const std::vector<VerifyCommand> commands = {VerifyCommand::lemma2,   VerifyCommand::lemma3,
                                                      VerifyCommand::lemma4,   VerifyCommand::theorem1,
                                                      VerifyCommand::jacobian, VerifyCommand::sure_unbiased};
  return commands;
}

VerifyCommand parse_verify_command(const std::string& text) {
  for (VerifyCommand c : all_verify_commands())
    if (to_string(c) == text) return c;
  throw InvalidArgument("unknown verify command '" + text + "'");
}

Matrix normalized_gaussian_rows(Index rows, Index cols, double row_norm, std::uint64_t seed) {
  Matrix w = Rng(seed).normal_matrix(rows, cols);
  for (Index i = 0; i < rows; ++i) w.row(i) *= row_norm / w.row(i).norm();
  return w;
}

Matrix orthonormal_rows(Index rows, Index cols, std::uint64_t seed) {
  if (rows > cols) throw InvalidArgument("orthonormal rows: need rows <= cols");
  Rng rng(seed);
  if (std::has_single_bit(static_cast<std::uint64_t>(cols))) {
    // Signed, permuted rows of a block-diagonal Hadamard matrix whose blocks
    // have power-of-four size, so entries are +-2^-k and W W^T = I exactly.
    Index block = 1;
    while (block * 4 <= cols) block *= 4;
    const Matrix h = hadamard(block) / std::sqrt(static_cast<double>(block));
    std::vector<Index> row_order(static_cast<std::size_t>(cols)), col_order(static_cast<std::size_t>(cols));
    std::iota(row_order.begin(), row_order.end(), Index{0});
    std::iota(col_order.begin(), col_order.end(), Index{0});
    rng.shuffle(std::span<Index>(row_order));
    rng.shuffle(std::span<Index>(col_order));
    auto entry = [&](Index i, Index j) { return i / block == j / block ? h(i % block, j % block) : 0.0; };
    Matrix w(rows, cols);
    for (Index j = 0; j < cols; ++j) {
      const double sign = rng.rademacher();
      for (Index i = 0; i < rows; ++i)
        w(i, j) = sign * entry(row_order[static_cast<std::size_t>(i)], col_order[static_cast<std::size_t>(j)]);
    }
    return w;
  }
  const Matrix g = rng.normal_matrix(cols, rows);
  Eigen::HouseholderQR<Matrix> qr(g);
  return (qr.householderQ() * Matrix::Identity(cols, rows)).transpose();
}

VerifyParams default_verify_params(VerifyCommand command) {
  VerifyParams p;
  switch (command) {
    case VerifyCommand::lemma2:
      p = {.trials = 5, .n = 16, .samples = 2000, .rank = 4, .sigma = 0.1, .tolerance = 1e-10};
      break;
    case VerifyCommand::lemma3:
      p = {.trials = 50, .n = 16, .width = 8, .tolerance = 1e-6, .family = "generic"};
      break;
    case VerifyCommand::lemma4:
      p = {.trials = 100, .n = 16, .width = 8, .iterations = 4, .max_subset = 4, .samples = 32, .tolerance = 1e-12};
      break;
    case VerifyCommand::theorem1:
      p = {.trials = 20, .n = 16, .width = 8, .iterations = 10, .samples = 8, .rank = 4, .sigma = 0.1,
           .tolerance = 1e-9, .family = "orthonormal"};
      break;
    case VerifyCommand::jacobian:
      p = {.trials = 20, .n = 16, .width = 8, .iterations = 3, .tolerance = 1e-5};
      break;
    case VerifyCommand::sure_unbiased:
      p = {.trials = 1, .n = 64, .width = 64, .iterations = 2, .samples = 2000, .rank = 8, .sigma = 0.1,
           .tolerance = 3.0};
      break;
  }
  return p;
}

VerifyParams resolve_verify_params(VerifyCommand command, VerifyParams p) {
  VerifyParams d = default_verify_params(command);
  if (command == VerifyCommand::theorem1 && p.family == "trained") {
    d.trials = 4;
    d.width = 4;
    d.iterations = 6;
    d.samples = 64;
  }
  if (p.trials == 0) p.trials = d.trials;
  if (p.n == 0) p.n = d.n;
  if (p.width == 0) p.width = d.width;
  if (p.iterations == 0) p.iterations = d.iterations;
  if (p.max_subset == 0) p.max_subset = d.max_subset;
  if (p.samples == 0) p.samples = d.samples;
  if (p.rank == 0) p.rank = d.rank;
  if (p.sigma == 0.0) p.sigma = d.sigma;
  if (p.tolerance == 0.0) p.tolerance = d.tolerance;
  if (p.family.empty()) p.family = d.family;
  if (p.trials < 1) throw InvalidArgument("verify: trials must be positive");
  if (p.n < 1 || p.width < 0 || p.iterations < 0 || p.samples < 0 || p.rank < 0)
    throw InvalidArgument("verify: sizes must be positive");
  if (p.sigma < 0.0 || p.tolerance < 0.0) throw InvalidArgument("verify: sigma and tolerance must be >= 0");
  return p;
}

VerifyReport run_verify(VerifyCommand command, const VerifyParams& params) {
  switch (command) {
    case VerifyCommand::lemma2: return verify_lemma2(params);
    case VerifyCommand::lemma3: return verify_lemma3(params);
    case VerifyCommand::lemma4: return verify_lemma4(params);
    case VerifyCommand::theorem1: return verify_theorem1(params);
    case VerifyCommand::jacobian: return verify_jacobian(params);
    case VerifyCommand::sure_unbiased: return verify_sure_unbiased(params);
  }
  throw InvalidArgument("verify: unknown command");
}

// Closed-form PCA against exhaustive search over eigenvector subsets (explicit
// projectors), plus 100 random projections of the same rank.
VerifyReport verify_lemma2(const VerifyParams& params) {
  const VerifyParams p = resolve_verify_params(VerifyCommand::lemma2, params);
  if (p.n > 20) throw InvalidArgument("verify lemma2: exhaustive subset search needs n <= 20");
  const double sigma2 = p.sigma * p.sigma;
  Tally tally;
  nlohmann::json trials = nlohmann::json::array();
  Index dof_mismatches = 0;
  for (Index trial = 0; trial < p.trials; ++trial) {
    const std::uint64_t seed = derive_seed(p.seed, static_cast<std::uint64_t>(trial));
    const Dataset data = generate_subspace_data(p.n, p.rank, p.samples, seed);
    const Matrix c = sample_correlation(data);
    const PcaResult pca = pca_closed_form_from_correlation(c, sigma2);
    const Matrix p_closed = row_space_projector(pca.w);
    const Matrix shifted = c - sigma2 * Matrix::Identity(p.n, p.n);

    double best = HUGE_VAL;
    std::uint32_t best_subset = 0;
    const Matrix& v = pca.eigenvectors;
    for (std::uint32_t subset = 0; subset < (1u << p.n); ++subset) {
      Matrix basis(p.n, std::popcount(subset));
      Index col = 0;
      for (Index i = 0; i < p.n; ++i)
        if (subset & (1u << i)) basis.col(col++) = v.col(i);
      const Matrix proj = basis * basis.transpose();
      const double obj = (proj.cwiseProduct(shifted)).sum();
      if (obj < best) {
        best = obj;
        best_subset = subset;
      }
    }
    Matrix oracle_basis(p.n, std::popcount(best_subset));
    Index col = 0;
    for (Index i = 0; i < p.n; ++i)
      if (best_subset & (1u << i)) oracle_basis.col(col++) = v.col(i);
    const Matrix p_oracle = oracle_basis * oracle_basis.transpose();
    const Index oracle_dof = p.n - std::popcount(best_subset);
    Index count_ge = 0;
    for (Index i = 0; i < p.n; ++i) count_ge += pca.eigenvalues[i] >= sigma2 ? 1 : 0;

    tally.check((p_closed - p_oracle).cwiseAbs().maxCoeff(), 0.0, p.tolerance);
    tally.check(std::abs(pca.objective - best), 0.0, p.tolerance * (1.0 + std::abs(best)));
    if (pca.dof_spectral != oracle_dof || pca.dof_spectral != count_ge) {
      tally.fail(std::abs(static_cast<double>(pca.dof_spectral - oracle_dof)) + 1.0);
      ++dof_mismatches;
    } else {
      tally.check(0.0, 0.0, 0.0);
    }

    Rng rng(derive_seed(seed, 0x72616e64ULL));
    const Index rank = pca.w.rows();
    double random_best = HUGE_VAL;
    for (int r = 0; r < 100; ++r) {
      Matrix proj = Matrix::Zero(p.n, p.n);
      if (rank > 0) {
        Eigen::HouseholderQR<Matrix> qr(rng.normal_matrix(p.n, rank));
        const Matrix q = qr.householderQ() * Matrix::Identity(p.n, rank);
        proj = q * q.transpose();
      }
      const double obj = pca_objective(proj, c, sigma2);
      random_best = std::min(random_best, obj);
      tally.check(pca.objective - obj, 0.0, 1e-12);
    }
    trials.push_back({{"seed", seed},
                      {"dof_spectral", pca.dof_spectral},
                      {"dof_literal", pca.dof_literal},
                      {"dof_oracle", oracle_dof},
                      {"objective", pca.objective},
                      {"oracle_objective", best},
                      {"best_random_objective", random_best}});
  }
  return finish(VerifyCommand::lemma2, p, tally,
                {{"sigma_hat_sq", sigma2}, {"dof_mismatches", dof_mismatches}, {"trials", trials}});
}

// Fixed-point limit of the mask iteration against the projector built from
// its support.
VerifyReport verify_lemma3(const VerifyParams& params) {
  const VerifyParams p = resolve_verify_params(VerifyCommand::lemma3, params);
  if (p.family != "generic" && p.family != "orthonormal")
    throw InvalidArgument("verify lemma3: family must be generic or orthonormal");
  const FixedPointOptions fp{.tol = 1e-12, .max_iterations = 10000, .tail = 10};
  Tally tally;
  Index converged = 0, attempts = 0, residual_failures = 0, dof_failures = 0, exact_cases = 0;
  double max_residual = 0.0, max_dof_gap = 0.0;
  const Index max_attempts = 20 * p.trials;
  while (converged < p.trials && attempts < max_attempts) {
    const std::uint64_t seed = derive_seed(p.seed, static_cast<std::uint64_t>(attempts));
    ++attempts;
    const Matrix w = p.family == "generic" ? normalized_gaussian_rows(p.width, p.n, 0.9, seed)
                                           : orthonormal_rows(p.width, p.n, seed);
    const Vector y = Rng(derive_seed(seed, 1)).normal_vector(p.n);
    const FixedPointResult r = mask_fixed_point(w, y, fp);
    if (!r.converged) continue;
    ++converged;
    const double gap = std::abs(static_cast<double>(r.dof_lemma3) - r.jacobian_trace);
    const bool exact = r.tail_margin > fp.tol;
    exact_cases += exact ? 1 : 0;
    max_residual = std::max(max_residual, r.projector_residual);
    max_dof_gap = std::max(max_dof_gap, gap);
    if (r.projector_residual > p.tolerance) ++residual_failures;
    tally.check(r.projector_residual, 0.0, p.tolerance);
    const double allowance = exact ? 0.0 : 1.0;
    if (gap > allowance + 1e-9) ++dof_failures;
    tally.check(gap, allowance, 1e-9);
  }
  if (converged < p.trials) tally.fail(static_cast<double>(p.trials - converged));
  return finish(VerifyCommand::lemma3, p, tally,
                {{"family", p.family},
                 {"converged", converged},
                 {"attempts", attempts},
                 {"max_projector_residual", max_residual},
                 {"max_dof_gap", max_dof_gap},
                 {"residual_failures", residual_failures},
                 {"dof_failures", dof_failures},
                 {"exact_cases", exact_cases}});
}

// Path-trace deviation against the incoherence bound, with traces, path
// sparsities and bounds taken as means over `samples` inputs per trial.
VerifyReport verify_lemma4(const VerifyParams& params) {
  const VerifyParams p = resolve_verify_params(VerifyCommand::lemma4, params);
  Tally tally;
  double max_ratio = 0.0;
  Index per_input_checks = 0, per_input_violations = 0;
  for (Index trial = 0; trial < p.trials; ++trial) {
    const std::uint64_t seed = derive_seed(p.seed, static_cast<std::uint64_t>(trial));
    const Matrix w = normalized_gaussian_rows(p.width, p.n, 1.0, seed);
    const UnrolledNetwork net = single_layer_denoiser(w, p.iterations);
    const std::vector<Vector> inputs = gaussian_inputs(p.samples, p.n, derive_seed(seed, 1));
    const JacobianReport rep = analyze_jacobian_expected(net, inputs, p.iterations);
    for (const PathTerm& term : rep.paths) {
      if (static_cast<Index>(term.indices.size()) > p.max_subset) continue;
      const Lemma4Check c = lemma4_deviation(term);
      tally.check(c.deviation, c.bound, p.tolerance);
      if (c.bound > 0.0) max_ratio = std::max(max_ratio, c.deviation / c.bound);
    }
    for (const Vector& y : inputs) {
      const JacobianReport single = analyze_jacobian(net, y, p.iterations);
      for (const PathTerm& term : single.paths) {
        if (static_cast<Index>(term.indices.size()) > p.max_subset) continue;
        ++per_input_checks;
        if (!lemma4_deviation(term).satisfied) ++per_input_violations;
      }
    }
  }
  return finish(VerifyCommand::lemma4, p, tally,
                {{"max_deviation_bound_ratio", max_ratio},
                 {"per_input_checks", per_input_checks},
                 {"per_input_violations", per_input_violations}});
}

namespace {

VerifyReport theorem1_orthonormal(const VerifyParams& p) {
  Tally tally;
  Index bound_nonzero = 0;
  for (Index t = 1; t <= p.iterations; ++t) {
    for (Index trial = 0; trial < p.trials; ++trial) {
      const std::uint64_t seed = derive_seed(derive_seed(p.seed, static_cast<std::uint64_t>(t)), static_cast<std::uint64_t>(trial));
      const UnrolledNetwork net = single_layer_denoiser(orthonormal_rows(p.width, p.n, seed), t);
      for (const Vector& y : gaussian_inputs(p.samples, p.n, derive_seed(seed, 1))) {
        const JacobianReport rep = analyze_jacobian(net, y, std::max<Index>(t, kDefaultPathCap));
        tally.check(std::abs(rep.trace - rep.surrogate), rep.bound, p.tolerance * static_cast<double>(p.n));
        if (rep.bound != 0.0) {
          ++bound_nonzero;
          tally.fail(rep.bound);
        }
      }
    }
  }
  return finish(VerifyCommand::theorem1, p, tally, {{"family", "orthonormal"}, {"bound_nonzero", bound_nonzero}});
}

VerifyReport theorem1_trained(const VerifyParams& p) {
  Tally tally;
  nlohmann::json runs = nlohmann::json::array();
  Index checked = 0, exempt = 0;
  const double sigma = p.sigma;
  for (Index t = 2; t <= p.iterations; ++t) {
    for (Index trial = 0; trial < p.trials; ++trial) {
      const std::uint64_t seed = derive_seed(derive_seed(p.seed, static_cast<std::uint64_t>(t)), static_cast<std::uint64_t>(trial));
      const SensingOperator op = SensingOperator::identity(p.n);
      auto pairs = [&](Index count, Index first, std::uint64_t noise) {
        const Dataset d = generate_subspace_data(p.n, p.rank, count, seed, first);
        PairedData out{d.samples, add_noise(d.samples, sigma, noise)};
        return out;
      };
      const PairedData train_set = pairs(256, 0, derive_seed(seed, 2));
      const PairedData test_set = pairs(p.samples, Index{1} << 40, derive_seed(seed, 3));
      ModelSpec model{.mode = WeightMode::shared, .iterations = t, .widths = {p.width}, .symmetric = true, .step = {}};
      TrainOptions opts;
      opts.learning_rates = {1e-3, 3e-3};
      opts.epochs = 10;
      opts.batch_size = 32;
      opts.seed = seed;
      const TrainRunResult trained = train(op, model, train_set, test_set, opts);
      const UnrolledNetwork net(trained.stack, op, StepParams{});
      const JacobianReport rep = analyze_jacobian_expected(net, test_set.measurements, t);
      const double gap = std::abs(rep.trace - rep.surrogate);
      const bool in_scope = rep.epsilon < 1.0;
      if (in_scope) {
        ++checked;
        tally.check(gap, rep.bound, p.tolerance * static_cast<double>(p.n));
      } else {
        ++exempt;
      }
      runs.push_back({{"T", t},
                      {"seed", seed},
                      {"mu_w", rep.mu_w},
                      {"epsilon", rep.epsilon},
                      {"gap", gap},
                      {"bound", rep.bound},
                      {"in_scope", in_scope}});
    }
  }
  return finish(VerifyCommand::theorem1, p, tally,
                {{"family", "trained"}, {"checked", checked}, {"exempt", exempt}, {"runs", runs}});
}

struct JacobianConfig {
  std::string op_name;
  StepKind step;
  WeightMode mode;
  Index layers;
  bool symmetric;
};

SensingOperator make_test_operator(const std::string& name, Index n, std::uint64_t seed) {
  Index rows = static_cast<Index>(std::lround(std::sqrt(static_cast<double>(n))));
  if (rows * rows != n) rows = 1;
  const ImageShape shape{rows, n / rows};
  if (name == "identity") return SensingOperator::identity(n);
  if (name == "blur") return SensingOperator::gaussian_blur(shape, 1.0, 1);
  return SensingOperator::variable_density_dft(shape, 0.5, seed);
}

}  // namespace

VerifyReport verify_theorem1(const VerifyParams& params) {
  const VerifyParams p = resolve_verify_params(VerifyCommand::theorem1, params);
  if (p.iterations > kDefaultPathCap) throw InvalidArgument("verify theorem1: T above the path-enumeration cap");
  if (p.family == "orthonormal") return theorem1_orthonormal(p);
  if (p.family == "trained") return theorem1_trained(p);
  throw InvalidArgument("verify theorem1: family must be orthonormal or trained");
}

// Accumulated Jacobian against coordinate finite differences over operator,
// step, weight mode, depth and symmetry. Inputs within 1e-4 of an activation
// boundary are redrawn.
VerifyReport verify_jacobian(const VerifyParams& params) {
  const VerifyParams p = resolve_verify_params(VerifyCommand::jacobian, params);
  std::vector<JacobianConfig> configs;
  for (const char* op : {"identity", "blur", "dft"})
    for (StepKind step : {StepKind::gradient, StepKind::least_squares})
      for (WeightMode mode : {WeightMode::shared, WeightMode::changing})
        for (Index layers : {1, 2})
          for (bool symmetric : {true, false}) configs.push_back({op, step, mode, layers, symmetric});
  Tally tally;
  nlohmann::json per_config = nlohmann::json::array();
  Index redrawn = 0;
  for (std::size_t ci = 0; ci < configs.size(); ++ci) {
    const auto& cfg = configs[ci];
    const std::uint64_t seed = derive_seed(p.seed, ci);
    const SensingOperator op = make_test_operator(cfg.op_name, p.n, seed);
    const std::vector<Index> widths(static_cast<std::size_t>(cfg.layers), p.width);
    const ProximalStack stack = ProximalStack::gaussian(cfg.mode, p.n, p.iterations, widths, cfg.symmetric,
                                                        1.0 / std::sqrt(static_cast<double>(p.n)), seed);
    const UnrolledNetwork net(stack, op, StepParams{0.5, cfg.step});
    Rng rng(derive_seed(seed, 7));
    double worst = 0.0;
    Index done = 0, attempts = 0;
    while (done < p.trials && attempts < 50 * p.trials) {
      ++attempts;
      const Vector u = rng.normal_vector(p.n);
      const Vector y = op.is_square() ? u : op.forward(u);
      const ForwardResult fwd = net.forward(y, {.record = true});
      if (fwd.trace.min_margin() < 1e-4) {
        ++redrawn;
        continue;
      }
      ++done;
      const Matrix jac = accumulate_jacobian(fwd.trace, net);
      double err = 0.0;
      if (op.is_square()) {
        const double exact = jacobian_trace(jac);
        const double fd = dof_finite_difference([&](const Vector& v) { return net(v); }, y);
        err = std::abs(exact - fd) / (1.0 + std::abs(exact));
      } else {
        // Non-square: divergence of u -> h(Phi u), whose Jacobian is J Phi,
        // plus an entrywise check of J itself.
        const Matrix phi = op.matrix();
        const double exact = (jac * phi).trace();
        const double fd = dof_finite_difference([&](const Vector& v) { return net(op.forward(v)); }, u);
        err = std::abs(exact - fd) / (1.0 + std::abs(exact));
        const double delta = default_fd_delta(y);
        const Vector base = net(y);
        Matrix jfd(p.n, y.size());
        for (Index j = 0; j < y.size(); ++j) {
          Vector yp = y;
          yp[j] += delta;
          jfd.col(j) = (net(yp) - base) / delta;
        }
        err = std::max(err, (jac - jfd).cwiseAbs().maxCoeff() / (1.0 + jac.cwiseAbs().maxCoeff()));
      }
      worst = std::max(worst, err);
      tally.check(err, 0.0, p.tolerance);
    }
    if (done < p.trials) tally.fail(static_cast<double>(p.trials - done));
    per_config.push_back({{"operator", cfg.op_name},
                          {"step", to_string(cfg.step)},
                          {"mode", to_string(cfg.mode)},
                          {"layers", cfg.layers},
                          {"symmetric", cfg.symmetric},
                          {"inputs", done},
                          {"max_relative_error", worst}});
  }
  return finish(VerifyCommand::jacobian, p, tally, {{"redrawn_inputs", redrawn}, {"configs", per_config}});
}

// Mean SURE against mean squared error over fresh noise draws for a fixed
// trained network and fixed unit-norm signal.
VerifyReport verify_sure_unbiased(const VerifyParams& params) {
  const VerifyParams p = resolve_verify_params(VerifyCommand::sure_unbiased, params);
  Tally tally;
  nlohmann::json per_trial = nlohmann::json::array();
  for (Index trial = 0; trial < p.trials; ++trial) {
    const std::uint64_t seed = derive_seed(p.seed, static_cast<std::uint64_t>(trial));
    const SensingOperator op = SensingOperator::identity(p.n);
    const Dataset train_data = generate_subspace_data(p.n, p.rank, 512, seed);
    const Dataset test_data = generate_subspace_data(p.n, p.rank, 129, seed, Index{1} << 40);
    PairedData train_set{train_data.samples, add_noise(train_data.samples, p.sigma, derive_seed(seed, 2))};
    std::vector<Vector> test_targets(test_data.samples.begin() + 1, test_data.samples.end());
    PairedData test_set{test_targets, add_noise(test_targets, p.sigma, derive_seed(seed, 3))};
    ModelSpec model{.mode = WeightMode::shared, .iterations = p.iterations, .widths = {p.width}, .symmetric = true, .step = {}};
    TrainOptions opts;
    opts.learning_rates = {1e-3};
    opts.epochs = 10;
    opts.seed = seed;
    const TrainRunResult trained = train(op, model, train_set, test_set, opts);
    const UnrolledNetwork net(trained.stack, op, StepParams{});

    const Vector& x = test_data.samples.front();
    const std::uint64_t noise_seed = derive_seed(seed, 4);
    double sure_mean = 0.0, sure_m2 = 0.0, err_mean = 0.0, err_m2 = 0.0, diff_mean = 0.0, diff_m2 = 0.0;
    double lemma1_gap = 0.0;
    for (Index j = 0; j < p.samples; ++j) {
      const Vector y = add_noise(x, p.sigma, noise_seed, j);
      const ForwardResult fwd = net.forward(y, {.record = true});
      const Matrix jac = accumulate_jacobian(fwd.trace, net);
      const double s = sure(rss(y, fwd.output), dof_exact(jac), p.n, p.sigma);
      const double e = (fwd.output - x).squaredNorm();
      const Lemma1Sides l1 = lemma1_rss_decomposition(jac, y);
      lemma1_gap = std::max(lemma1_gap, std::abs(l1.lhs - l1.rhs));
      const double k = static_cast<double>(j + 1);
      auto welford = [k](double v, double& mean, double& m2) {
        const double d = v - mean;
        mean += d / k;
        m2 += d * (v - mean);
      };
      welford(s, sure_mean, sure_m2);
      welford(e, err_mean, err_m2);
      welford(s - e, diff_mean, diff_m2);
    }
    const double count = static_cast<double>(p.samples);
    const double se_sure = std::sqrt(sure_m2 / (count - 1.0) / count);
    const double se_err = std::sqrt(err_m2 / (count - 1.0) / count);
    const double combined = std::sqrt(se_sure * se_sure + se_err * se_err);
    const double paired = std::sqrt(diff_m2 / (count - 1.0) / count);
    const double gap = std::abs(sure_mean - err_mean);
    tally.check(gap, p.tolerance * combined, 0.0);
    per_trial.push_back({{"seed", seed},
                         {"mean_sure", sure_mean},
                         {"mean_squared_error", err_mean},
                         {"combined_se", combined},
                         {"paired_se", paired},
                         {"gap", gap},
                         {"gap_in_se", gap / combined},
                         {"learning_rate", trained.learning_rate},
                         {"max_lemma1_identity_gap", lemma1_gap}});
  }
  return finish(VerifyCommand::sure_unbiased, p, tally,
                {{"normalization", "sums over coordinates"}, {"trials", per_trial}});
}

nlohmann::json to_json(const VerifyReport& r) {
  const VerifyParams& p = r.params;
  return {{"command", to_string(r.command)},
          {"trials", r.trials},
          {"max_violation", r.max_violation},
          {"max_deviation", r.max_deviation},
          {"tolerance", r.tolerance},
          {"pass", r.pass},
          {"params",
           {{"trials", p.trials},
            {"seed", p.seed},
            {"n", p.n},
            {"width", p.width},
            {"iterations", p.iterations},
            {"max_subset", p.max_subset},
            {"samples", p.samples},
            {"rank", p.rank},
            {"sigma", p.sigma},
            {"tolerance", p.tolerance},
            {"family", p.family}}},
          {"details", r.details}};
}

}  // namespace sunroll
