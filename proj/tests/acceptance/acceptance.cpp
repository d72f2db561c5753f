// Acceptance run: one PASS/FAIL line per criterion, details indented below.
//
//   acceptance [--strict] [--only N[,N...]] [--report FILE]
//
// Exit status is 0 once every selected criterion has been evaluated; with
// --strict any FAIL line makes it 1.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sunroll/config.hpp"
#include "sunroll/dataset.hpp"
#include "sunroll/jacobian.hpp"
#include "sunroll/random.hpp"
#include "sunroll/sure.hpp"
#include "sunroll/sweep.hpp"
#include "sunroll/training.hpp"
#include "sunroll/verify.hpp"

using namespace sunroll;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string summary;
  std::vector<std::string> notes;
};

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome()> run;
};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string sci(double v) { return fmt("%.3g", v); }

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("sunroll_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Outcome from_verify(const VerifyReport& r) {
  Outcome o;
  o.pass = r.pass;
  o.summary = "max_violation " + sci(r.max_violation) + ", max_deviation " + sci(r.max_deviation) +
              ", tolerance " + sci(r.tolerance) + ", trials " + std::to_string(r.trials);
  return o;
}

// 1. Path expansion reproduces the exact Jacobian trace.
Outcome path_expansion_identity() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(20240101);
  double worst = 0.0;
  Index max_t = 0;
  for (int net_index = 0; net_index < 200; ++net_index) {
    const Index n = 2 + static_cast<Index>(rng.below(31));
    const Index width = 2 + static_cast<Index>(rng.below(15));
    const Index t = 1 + static_cast<Index>(rng.below(10));
    max_t = std::max(max_t, t);
    const Matrix w = rng.normal_matrix(width, n) / std::sqrt(static_cast<double>(n));
    const ProximalStack stack(WeightMode::shared, t, true, {WeightSet{ResidualLayer{w, {}}}});
    const UnrolledNetwork net(stack, SensingOperator::identity(n), StepParams{});
    const ForwardResult fwd = net.forward(rng.normal_vector(n), {.record = true});
    const double exact = jacobian_trace(accumulate_jacobian(fwd.trace, net));
    double expanded = static_cast<double>(n);
    for (const PathTerm& p : path_expansion(fwd.trace, stack)) expanded += p.sign() * p.trace_exact;
    worst = std::max(worst, std::abs(exact - expanded) / static_cast<double>(n));
  }
  const double elapsed = seconds_since(start);
  Outcome o;
  o.pass = worst <= 1e-9 && elapsed < 60.0;
  o.summary = "max |gap|/n " + sci(worst) + " (limit 1e-9), 200 nets, T up to " + std::to_string(max_t) + ", " +
              fmt("%.1f", elapsed) + " s (limit 60 s)";
  return o;
}

// 2. Orthonormal rows: surrogate equals the trace, bound exactly zero.
Outcome theorem1_orthonormal() {
  VerifyParams p;
  p.family = "orthonormal";
  const VerifyReport r = run_verify(VerifyCommand::theorem1, p);
  Outcome o = from_verify(r);
  o.summary += ", T 1.." + std::to_string(r.params.iterations) +
               ", nonzero bounds " + r.details.at("bound_nonzero").dump();
  return o;
}

// 3. Lemma 4 deviation bound on Gaussian W.
Outcome lemma4_bound() {
  const VerifyReport r = run_verify(VerifyCommand::lemma4);
  Outcome o = from_verify(r);
  const auto& d = r.details;
  o.summary += ", failing checks " + d.at("failures").dump() + "/" + d.at("checks").dump() +
               ", max deviation/bound " + sci(d.at("max_deviation_bound_ratio").get<double>());
  o.notes.push_back("per-input violations " + d.at("per_input_violations").dump() + "/" +
                    d.at("per_input_checks").dump() + " (informational)");
  return o;
}

// 4. Theorem 1 bound on trained nets, T = 2..6.
Outcome theorem1_trained() {
  VerifyParams p;
  p.family = "trained";
  p.iterations = 6;
  const VerifyReport r = run_verify(VerifyCommand::theorem1, p);
  Outcome o = from_verify(r);
  const auto& d = r.details;
  o.summary += ", checked " + d.at("checked").dump() + ", exempt (eps >= 1) " + d.at("exempt").dump();
  double worst_ratio = 0.0;
  for (const auto& run : d.at("runs")) {
    if (!run.at("in_scope").get<bool>()) continue;
    const double bound = run.at("bound").get<double>();
    if (bound > 0) worst_ratio = std::max(worst_ratio, run.at("gap").get<double>() / bound);
  }
  o.notes.push_back("largest gap/bound among checked runs " + sci(worst_ratio));
  return o;
}

// 5. Accumulated Jacobian against finite differences.
Outcome jacobian_correctness() {
  const VerifyReport r = run_verify(VerifyCommand::jacobian);
  Outcome o = from_verify(r);
  o.summary += ", configs " + std::to_string(r.details.at("configs").size());
  return o;
}

// 6. Reverse-mode gradients against central differences.
Outcome gradient_check() {
  double worst = 0.0;
  Index coords = 0;
  const double h = 1e-5;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (WeightMode mode : {WeightMode::shared, WeightMode::changing}) {
      const SensingOperator op = SensingOperator::dense(Rng(derive_seed(seed, 1)).normal_matrix(5, 6));
      const StepParams step{0.4, seed % 2 == 0 ? StepKind::gradient : StepKind::least_squares};
      const ProximalStack stack =
          ProximalStack::gaussian(mode, 6, 2, {5, 4}, seed % 4 < 2, 0.3, derive_seed(seed, 2));
      Rng rng(derive_seed(seed, 3));
      std::vector<Vector> xs, ys;
      for (int i = 0; i < 3; ++i) {
        xs.push_back(rng.normal_vector(6).normalized());
        ys.push_back(op.forward(xs.back()) + 0.1 * rng.normal_vector(5));
      }
      const LossAndGradients lg = loss_and_gradients(UnrolledNetwork(stack, op, step), xs, ys);
      for (std::size_t s = 0; s < stack.weight_sets().size(); ++s) {
        for (std::size_t k = 0; k < stack.weight_sets()[s].size(); ++k) {
          for (bool bar : {false, true}) {
            if (bar && stack.symmetric()) continue;
            const Matrix& g = bar ? lg.grads[s][k].w_bar : lg.grads[s][k].w;
            for (Index i = 0; i < g.size(); ++i) {
              auto shifted = [&](double d) {
                ProximalStack copy = stack;
                auto& unit = copy.mutable_weight_set(s)[k];
                (bar ? unit.w_bar : unit.w).data()[i] += d;
                return evaluate_loss(UnrolledNetwork(copy, op, step), xs, ys);
              };
              const double fd = (shifted(h) - shifted(-h)) / (2 * h);
              const double a = g.data()[i];
              const double scale = std::max({std::abs(a), std::abs(fd), 1e-6});
              worst = std::max(worst, std::abs(a - fd) / scale);
              ++coords;
            }
          }
        }
      }
    }
  }
  Outcome o;
  o.pass = worst <= 1e-4;
  o.summary = "max relative error " + sci(worst) + " (limit 1e-4), " + std::to_string(coords) +
              " coordinates, 10 seeds x {ws, wc}";
  return o;
}

// 7. SURE is unbiased for the test error.
Outcome sure_unbiased() {
  const auto start = std::chrono::steady_clock::now();
  const VerifyReport r = run_verify(VerifyCommand::sure_unbiased);
  const double elapsed = seconds_since(start);
  const auto& t = r.details.at("trials").at(0);
  Outcome o;
  o.pass = r.pass && elapsed < 120.0;
  o.summary = "mean SURE " + sci(t.at("mean_sure").get<double>()) + ", mean error " +
              sci(t.at("mean_squared_error").get<double>()) + ", gap " + fmt("%.2f", t.at("gap_in_se").get<double>()) +
              " combined SE (limit 3), " + std::to_string(r.params.samples) + " draws, " + fmt("%.1f", elapsed) +
              " s (limit 120 s)";
  return o;
}

// 8. Monte Carlo DOF converges to the exact trace.
Outcome monte_carlo_convergence() {
  std::vector<double> err16, err1024;
  int covered = 0, trials = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const ProximalStack stack = ProximalStack::gaussian(WeightMode::changing, 16, 3, {16}, true, 0.25, seed);
    const UnrolledNetwork net(stack, SensingOperator::identity(16), StepParams{});
    Rng rng(derive_seed(seed, 11));
    Vector y = rng.normal_vector(16);
    ForwardResult fwd = net.forward(y, {.record = true});
    while (fwd.trace.min_margin() < 1e-3) {
      y = rng.normal_vector(16);
      fwd = net.forward(y, {.record = true});
    }
    const double exact = jacobian_trace(accumulate_jacobian(fwd.trace, net));
    const VectorMap h = [&](const Vector& v) { return net(v); };
    const double delta = 1e-6;
    err16.push_back(std::abs(dof_monte_carlo(h, y, 16, delta, ProbeDistribution::rademacher, seed).estimate - exact));
    err1024.push_back(
        std::abs(dof_monte_carlo(h, y, 1024, delta, ProbeDistribution::rademacher, seed).estimate - exact));
    const MonteCarloDof big = dof_monte_carlo(h, y, 4096, delta, ProbeDistribution::rademacher, seed);
    covered += std::abs(big.estimate - exact) <= 3 * big.std_error ? 1 : 0;
    ++trials;
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
  };
  const double m16 = median(err16), m1024 = median(err1024);
  const double coverage = static_cast<double>(covered) / trials;
  Outcome o;
  o.pass = m1024 < m16 && coverage >= 0.95;
  o.summary = "median error K=16 " + sci(m16) + ", K=1024 " + sci(m1024) + "; K=4096 within 3 SE in " +
              std::to_string(covered) + "/" + std::to_string(trials) + " (limit 95%)";
  return o;
}

// 9. PCA closed form against the eigen-subset oracle.
Outcome lemma2() {
  const VerifyReport r = run_verify(VerifyCommand::lemma2);
  Outcome o = from_verify(r);
  std::set<std::string> dofs;
  for (const auto& t : r.details.at("trials")) dofs.insert(t.at("dof_spectral").dump());
  std::string joined;
  for (const auto& d : dofs) joined += (joined.empty() ? "" : ",") + d;
  o.summary += ", dof_spectral {" + joined + "}, dof mismatches " + r.details.at("dof_mismatches").dump();
  return o;
}

// 10. Fixed-point masks give a projector.
Outcome lemma3() {
  const VerifyReport r = run_verify(VerifyCommand::lemma3);
  Outcome o = from_verify(r);
  const auto& d = r.details;
  for (const char* key : {"converged", "residual_failures", "dof_failures", "max_projector_residual", "max_dof_gap"}) {
    if (d.contains(key)) o.notes.push_back(std::string(key) + " " + d.at(key).dump());
  }
  VerifyParams orth;
  orth.family = "orthonormal";
  const VerifyReport ro = run_verify(VerifyCommand::lemma3, orth);
  o.notes.push_back(std::string("orthonormal-row family: ") + (ro.pass ? "pass" : "fail") + ", max_violation " +
                    sci(ro.max_violation) + " (informational)");
  return o;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1) / 2;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  return sxy / std::sqrt(sxx * syy);
}

ExperimentConfig trend_config(const fs::path& out) {
  ExperimentConfig c;
  c.out = out.string();
  c.sigmas = {0.2};
  c.seeds = {1, 2, 3, 4, 5};
  c.data.n = 64;
  c.data.rank = 8;
  c.data.n_train = {16, 64, 256, 1024, 4096};
  c.data.n_test = 256;
  c.data.n_eval = 32;
  c.model.iterations = 3;
  c.model.widths = {256};
  c.optimizer.learning_rates = {1e-3, 3e-3, 1e-2};
  c.optimizer.epochs = 20;
  c.optimizer.anneal_epoch = 16;
  c.optimizer.batch = 32;
  c.evaluation.jacobian = false;
  return c;
}

// 11. Sample-size trends of DOF, RSS and the WS/WC gap.
Outcome trend() {
  const auto start = std::chrono::steady_clock::now();
  const fs::path out = scratch("trend");
  const ExperimentConfig config = trend_config(out);
  SweepOptions opts;
  opts.save_weights = false;
  const SweepResult result = run_sweep(config, opts);
  const double elapsed = seconds_since(start);
  std::map<std::pair<WeightMode, Index>, std::vector<const SweepRow*>> groups;
  Index failed = 0;
  for (const SweepRow& r : result.rows) {
    if (!r.ok()) {
      ++failed;
      continue;
    }
    groups[{r.mode, r.n_train}].push_back(&r);
  }
  auto mean = [&](WeightMode m, Index n, double SweepRow::*field) {
    const auto& rows = groups[{m, n}];
    double s = 0;
    for (const auto* r : rows) s += r->*field;
    return rows.empty() ? NAN : s / static_cast<double>(rows.size());
  };
  const auto& grid = config.data.n_train;
  std::vector<double> ns(grid.begin(), grid.end());
  Outcome o;
  bool a = true;
  for (WeightMode m : {WeightMode::shared, WeightMode::changing}) {
    std::vector<double> dof;
    std::string series;
    for (Index n : grid) {
      dof.push_back(mean(m, n, &SweepRow::dof_exact_mean));
      series += (series.empty() ? "" : ", ") + fmt("%.2f", dof.back());
    }
    const double rho = spearman(ns, dof);
    a = a && rho > 0.8;
    o.notes.push_back("(a) " + to_string(m) + " mean DOF [" + series + "], Spearman " + fmt("%.2f", rho) +
                      " (limit > 0.8)");
  }
  bool b = true;
  for (WeightMode m : {WeightMode::shared, WeightMode::changing}) {
    const double rss = mean(m, grid.back(), &SweepRow::rss_norm);
    b = b && rss >= 0.85 && rss <= 1.15;
    o.notes.push_back("(b) " + to_string(m) + " normalized RSS at N=" + std::to_string(grid.back()) + " " +
                      fmt("%.3f", rss) + " (range [0.85, 1.15])");
  }
  bool c = true;
  for (std::size_t i = 0; i < 2; ++i) {
    const double ws = mean(WeightMode::shared, grid[i], &SweepRow::test_mse);
    const double wc = mean(WeightMode::changing, grid[i], &SweepRow::test_mse);
    c = c && ws <= wc;
    o.notes.push_back("(c) N=" + std::to_string(grid[i]) + " test MSE ws " + sci(ws) + " <= wc " + sci(wc) +
                      (ws <= wc ? " holds" : " does not hold"));
  }
  const double ws_last = mean(WeightMode::shared, grid.back(), &SweepRow::test_mse);
  const double wc_last = mean(WeightMode::changing, grid.back(), &SweepRow::test_mse);
  const double rel = std::abs(ws_last - wc_last) / wc_last;
  const bool d = rel <= 0.05;
  o.notes.push_back("(d) N=" + std::to_string(grid.back()) + " |ws - wc|/wc test MSE " + fmt("%.3f", rel) +
                    " (limit 0.05)");
  o.pass = a && b && c && d && failed == 0 && elapsed < 1800.0;
  o.summary = std::string("(a) ") + (a ? "pass" : "fail") + ", (b) " + (b ? "pass" : "fail") + ", (c) " +
              (c ? "pass" : "fail") + ", (d) " + (d ? "pass" : "fail") + ", failed cells " +
              std::to_string(failed) + ", " + fmt("%.0f", elapsed) + " s (target 1800 s)";
  return o;
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream f(entry.path(), std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    files[fs::relative(entry.path(), root).string()] = s.str();
  }
  return files;
}

// 12. Sweep and verify artifacts are byte-identical across re-runs.
Outcome determinism() {
  const fs::path out = fs::temp_directory_path() / "sunroll_acceptance_determinism";
  ExperimentConfig c;
  c.out = out.string();
  c.seeds = {1, 2};
  c.data.n = 8;
  c.data.rank = 2;
  c.data.n_train = {16, 32};
  c.data.n_test = 32;
  c.data.n_eval = 8;
  c.model.iterations = 3;
  c.model.widths = {8};
  c.optimizer.epochs = 3;
  c.optimizer.batch = 8;
  c.evaluation.dof = DofEstimator::monte_carlo;
  c.evaluation.probes = 16;
  std::vector<std::map<std::string, std::string>> runs;
  bool echo_ok = true;
  for (Index workers : {1, 1, 3}) {
    fs::remove_all(out);
    c.workers = workers;
    run_sweep(c);
    runs.push_back(read_tree(out));
    echo_ok = echo_ok && runs.back()["config.ini"] == to_text(c);
    if (workers != 1) runs.back().erase("config.ini");
  }
  auto without_config = [](std::map<std::string, std::string> files) {
    files.erase("config.ini");
    return files;
  };
  const bool sweep_same = runs[0] == runs[1] && without_config(runs[0]) == runs[2] && echo_ok;
  std::size_t verify_same = 0, verify_total = 0;
  for (VerifyCommand cmd : all_verify_commands()) {
    VerifyParams p;
    p.trials = cmd == VerifyCommand::sure_unbiased ? 1 : 2;
    if (cmd == VerifyCommand::sure_unbiased) p.samples = 200;
    if (cmd == VerifyCommand::theorem1) p.iterations = 4;
    ++verify_total;
    if (to_json(run_verify(cmd, p)).dump(2) == to_json(run_verify(cmd, p)).dump(2)) ++verify_same;
  }
  Outcome o;
  o.pass = sweep_same && verify_same == verify_total;
  o.summary = "sweep artifacts (" + std::to_string(runs[0].size()) + " files, workers 1/1/3, config echo aside) " +
              (sweep_same ? "identical" : "differ") + ", verify reports identical " + std::to_string(verify_same) +
              "/" + std::to_string(verify_total);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  bool strict = false;
  std::set<int> only;
  std::string report_path;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--strict") {
      strict = true;
    } else if (arg == "--only" && i + 1 < argc) {
      std::stringstream list(argv[++i]);
      for (std::string item; std::getline(list, item, ',');) only.insert(std::stoi(item));
    } else if (arg == "--report" && i + 1 < argc) {
      report_path = argv[++i];
    } else {
      std::fprintf(stderr, "usage: acceptance [--strict] [--only N[,N...]] [--report FILE]\n");
      return 2;
    }
  }

  const std::vector<Criterion> criteria = {
      {1, "path-expansion identity", path_expansion_identity},
      {2, "surrogate exact at eps = 0", theorem1_orthonormal},
      {3, "path deviation bound", lemma4_bound},
      {4, "surrogate bound on trained nets", theorem1_trained},
      {5, "jacobian vs finite differences", jacobian_correctness},
      {6, "gradient check", gradient_check},
      {7, "SURE unbiasedness", sure_unbiased},
      {8, "monte carlo DOF convergence", monte_carlo_convergence},
      {9, "PCA closed form", lemma2},
      {10, "fixed-point projector", lemma3},
      {11, "sample-size trends", trend},
      {12, "determinism", determinism},
  };

  std::ostringstream report;
  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.summary = std::string("exception: ") + e.what();
    }
    failures += o.pass ? 0 : 1;
    std::ostringstream line;
    line << (o.pass ? "PASS" : "FAIL") << " " << (c.id < 10 ? " " : "") << c.id << " " << c.name << ": "
         << o.summary << "\n";
    for (const auto& note : o.notes) line << "        " << note << "\n";
    std::fputs(line.str().c_str(), stdout);
    std::fflush(stdout);
    report << line.str();
  }
  const std::string tail = std::to_string(failures) + " criteria failed\n";
  std::fputs(tail.c_str(), stdout);
  report << tail;
  if (!report_path.empty()) std::ofstream(report_path) << report.str();
  return strict && failures > 0 ? 1 : 0;
}
