// sunroll: unrolled proximal networks, SURE/DOF analysis and verification.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "sunroll/config.hpp"
#include "sunroll/dataset.hpp"
#include "sunroll/error.hpp"
#include "sunroll/jacobian.hpp"
#include "sunroll/random.hpp"
#include "sunroll/report.hpp"
#include "sunroll/spectrum.hpp"
#include "sunroll/sure.hpp"
#include "sunroll/sweep.hpp"
#include "sunroll/training.hpp"
#include "sunroll/verify.hpp"
#include "sunroll/weights_io.hpp"

namespace fs = std::filesystem;
using namespace sunroll;

namespace {

enum Exit { kOk = 0, kUsage = 1, kVerifyFailed = 2, kRuntime = 3 };

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };
Level g_level = Level::info;

void log(Level level, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (level <= g_level) std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << "\n";
}

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<Index> workers;
  std::string log_level = "info";
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f) throw Error("write failed for " + path.string());
}

ExperimentConfig load_with_overrides(const Globals& g) {
  ExperimentConfig c = g.config_path.empty() ? parse_config("") : load_config(g.config_path);
  if (g.seed) c.seeds = {*g.seed};
  if (!g.out.empty()) c.out = g.out;
  if (g.workers) c.workers = *g.workers;
  validate(c);
  return c;
}

fs::path out_dir(const Globals& g, const ExperimentConfig* c = nullptr) {
  if (!g.out.empty()) return g.out;
  return c ? fs::path(c->out) : fs::path("results");
}

PairedData paired(const SensingOperator& op, const Dataset& d, double sigma, std::uint64_t noise_seed) {
  PairedData p;
  p.targets = d.samples;
  for (std::size_t i = 0; i < d.samples.size(); ++i)
    p.measurements.push_back(add_noise(op.forward(d.samples[i]), sigma, noise_seed, static_cast<Index>(i)));
  return p;
}

Dataset config_data(const ExperimentConfig& c, Index count, std::uint64_t seed, Index first) {
  if (c.data.kind == DatasetKind::subspace) return generate_subspace_data(c.data.n, c.data.rank, count, seed, first);
  return generate_sparse_data(c.data.n, c.data.atoms, c.data.sparsity, count, seed, first);
}

constexpr Index kTestOffset = Index{1} << 40;

// ---- generate-data --------------------------------------------------------

struct GenerateArgs {
  std::string kind = "subspace";
  Index n = 16, rank = 4, atoms = 32, sparsity = 3, count = 1000, first = 0;
  double sigma = 0.0;
  std::string output = "dataset.sund";
};

int cmd_generate(const Globals& g, const GenerateArgs& a) {
  const std::uint64_t seed = g.seed.value_or(0);
  Dataset d = a.kind == "subspace" ? generate_subspace_data(a.n, a.rank, a.count, seed, a.first)
                                   : generate_sparse_data(a.n, a.atoms, a.sparsity, a.count, seed, a.first);
  fs::path path = a.output;
  if (!g.out.empty() && path.is_relative()) path = fs::path(g.out) / path;
  save_dataset(path.string(), d);
  log(Level::info, "wrote " + std::to_string(d.size()) + " samples to " + path.string());
  if (a.sigma > 0.0) {
    Dataset noisy = d;
    noisy.samples = add_noise(d.samples, a.sigma, derive_seed(seed, 0x6e6f697365ULL));
    fs::path noisy_path = path;
    noisy_path.replace_extension(".noisy" + path.extension().string());
    save_dataset(noisy_path.string(), noisy);
    log(Level::info, "wrote noisy observations to " + noisy_path.string());
  }
  return kOk;
}

// ---- train / evaluate -----------------------------------------------------

struct TrainArgs {
  std::string mode;
  Index n_train = 0;
  std::size_t sigma_index = 0;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  const ExperimentConfig c = load_with_overrides(g);
  const std::uint64_t seed = c.seeds.front();
  const WeightMode mode = a.mode.empty() ? c.model.modes.front() : parse_weight_mode(a.mode);
  const Index n_train = a.n_train > 0 ? a.n_train : c.data.n_train.back();
  if (a.sigma_index >= c.sigmas.size()) throw InvalidArgument("--sigma-index out of range");
  const double sigma = c.effective_sigma(a.sigma_index);
  const SensingOperator op = build_operator(c);
  const std::uint64_t noise = derive_seed(seed, a.sigma_index);
  const PairedData train_set = paired(op, config_data(c, n_train, seed, 0), sigma, derive_seed(noise, 1));
  const PairedData test_set = paired(op, config_data(c, c.data.n_test, seed, kTestOffset), sigma, derive_seed(noise, 2));
  log(Level::info, "training " + to_string(mode) + " on " + std::to_string(n_train) + " pairs");
  const TrainRunResult r = train(op, build_model(c, mode), train_set, test_set, build_train_options(c, seed));
  const fs::path dir = out_dir(g, &c);
  save_weights((dir / "model.sunw").string(), r.stack);
  nlohmann::json j = to_json(r);
  j["mode"] = to_string(mode);
  j["n_train"] = n_train;
  j["sigma"] = sigma;
  write_text(dir / "train.json", j.dump(2) + "\n");
  log(Level::info, "selected learning rate " + std::to_string(r.learning_rate) + "; wrote " + (dir / "model.sunw").string());
  return kOk;
}

struct EvaluateArgs {
  std::string weights;
  Index count = 0;
  std::size_t sigma_index = 0;
};

int cmd_evaluate(const Globals& g, const EvaluateArgs& a) {
  const ExperimentConfig c = load_with_overrides(g);
  const std::uint64_t seed = c.seeds.front();
  if (a.sigma_index >= c.sigmas.size()) throw InvalidArgument("--sigma-index out of range");
  const double sigma = c.effective_sigma(a.sigma_index);
  const SensingOperator op = build_operator(c);
  const UnrolledNetwork net(load_weights(a.weights), op, c.model.step);
  const Index count = a.count > 0 ? a.count : c.data.n_eval;
  const PairedData test = paired(op, config_data(c, count, seed, kTestOffset), sigma,
                                 derive_seed(derive_seed(seed, a.sigma_index), 2));
  nlohmann::json reports = nlohmann::json::array();
  double mse_sum = 0.0;
  double rss_sum = 0.0, dof_sum = 0.0, sure_sum = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Vector xhat = net(test.measurements[i]);
    mse_sum += mse_psnr(xhat, test.targets[i]).mse;
    if (!op.is_square()) continue;
    const SureReport rep = evaluate_sure(net, test.measurements[i], sigma,
                                         build_sure_options(c, derive_seed(seed, i)), &test.targets[i]);
    rss_sum += rep.rss;
    dof_sum += rep.dof;
    sure_sum += rep.sure;
    reports.push_back(to_json(rep));
  }
  const double k = static_cast<double>(test.size());
  nlohmann::json out = {{"sigma", sigma},
                        {"inputs", test.size()},
                        {"test_mse", mse_sum / k},
                        {"psnr", -10.0 * std::log10(mse_sum / k)},
                        {"normalization", {{"test_mse", "per-coordinate mean"}, {"rss", "sum"}, {"sure", "sum"}}}};
  if (op.is_square()) {
    out["rss_mean"] = rss_sum / k;
    out["dof_mean"] = dof_sum / k;
    out["sure_mean"] = sure_sum / k;
    out["reports"] = reports;
  }
  if (c.evaluation.jacobian && path_expansion_applicable(net) && net.stack().iterations() <= c.evaluation.path_cap)
    out["jacobian"] = to_json(analyze_jacobian_expected(net, test.measurements, c.evaluation.path_cap));
  const fs::path dir = out_dir(g, &c);
  write_text(dir / "evaluate.json", out.dump(2) + "\n");
  log(Level::info, "wrote " + (dir / "evaluate.json").string());
  return kOk;
}

// ---- sweep ----------------------------------------------------------------

struct SweepArgs {
  std::size_t max_cells = 0;
  bool no_weights = false;
};

int cmd_sweep(const Globals& g, const SweepArgs& a) {
  const ExperimentConfig c = load_with_overrides(g);
  SweepOptions opts;
  opts.max_new_cells = a.max_cells;
  opts.save_weights = !a.no_weights;
  opts.log = [](const std::string& m) { log(Level::info, m); };
  const SweepResult r = run_sweep(c, opts);
  if (!r.complete) {
    log(Level::warn, "sweep stopped early; re-run to resume");
    return kOk;
  }
  std::size_t failed = 0;
  for (const auto& row : r.rows) failed += row.ok() ? 0 : 1;
  log(Level::info, "sweep complete: " + std::to_string(r.rows.size()) + " rows (" + std::to_string(failed) +
                       " failed cells) in " + c.out);
  return kOk;
}

// ---- verify ---------------------------------------------------------------

int cmd_verify(const Globals& g, const std::string& command, VerifyParams params) {
  const VerifyCommand cmd = parse_verify_command(command);
  if (g.seed) params.seed = *g.seed;
  const VerifyReport r = run_verify(cmd, params);
  const std::string text = to_json(r).dump(2) + "\n";
  if (!g.out.empty()) {
    const fs::path path = fs::path(g.out) / ("verify_" + to_string(cmd) + ".json");
    write_text(path, text);
    log(Level::info, "wrote " + path.string());
  }
  std::cout << text;
  log(r.pass ? Level::info : Level::error,
      "verify " + to_string(cmd) + ": " + (r.pass ? "pass" : "FAIL") + " (max_violation " +
          std::to_string(r.max_violation) + ")");
  return r.pass ? kOk : kVerifyFailed;
}

// ---- spectrum -------------------------------------------------------------

struct SpectrumArgs {
  std::string weights;
  std::string kernels;
  std::string shape;
  Index pad = 32;
  Index set = 0;
  Index layer = 0;
};

ImageShape parse_shape(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos) throw InvalidArgument("--shape must look like RxC");
  return {std::stol(text.substr(0, x)), std::stol(text.substr(x + 1))};
}

int cmd_spectrum(const Globals& g, const SpectrumArgs& a) {
  std::vector<Matrix> kernels;
  if (!a.kernels.empty()) {
    std::ifstream f(a.kernels);
    if (!f) throw Error("cannot read " + a.kernels);
    const auto j = nlohmann::json::parse(f);
    for (const auto& k : j) {
      const Index rows = static_cast<Index>(k.size());
      const Index cols = rows ? static_cast<Index>(k[0].size()) : 0;
      Matrix m(rows, cols);
      for (Index r = 0; r < rows; ++r) {
        if (static_cast<Index>(k[r].size()) != cols) throw FormatError("kernels: ragged kernel");
        for (Index c = 0; c < cols; ++c) m(r, c) = k[r][c].get<double>();
      }
      kernels.push_back(std::move(m));
    }
  } else if (!a.weights.empty()) {
    const ProximalStack stack = load_weights(a.weights);
    if (a.set < 0 || a.set >= static_cast<Index>(stack.weight_sets().size())) throw InvalidArgument("--set out of range");
    const WeightSet& set = stack.weight_sets()[static_cast<std::size_t>(a.set)];
    if (a.layer < 0 || a.layer >= static_cast<Index>(set.size())) throw InvalidArgument("--layer out of range");
    const Matrix& w = set[static_cast<std::size_t>(a.layer)].w;
    const ImageShape shape = a.shape.empty() ? ImageShape{1, w.cols()} : parse_shape(a.shape);
    kernels = kernels_from_rows(w, shape);
  } else {
    throw InvalidArgument("spectrum needs --kernels or --weights");
  }
  const SpectrumResult r = filter_spectrum(kernels, a.pad);
  const fs::path dir = out_dir(g);
  write_text(dir / "spectrum.csv", spectrum_csv(r));
  const nlohmann::json summary = {{"pad", r.pad},
                                  {"kernels", kernels.size()},
                                  {"low_energy_ratio", r.low_energy_ratio},
                                  {"classification", to_string(r.classification)}};
  write_text(dir / "spectrum.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return kOk;
}

// ---- report ---------------------------------------------------------------

int cmd_report(const Globals& g, const std::string& input) {
  const fs::path dir = out_dir(g);
  for (const auto& p : write_report(input, dir.string())) log(Level::info, "wrote " + p);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unrolled proximal networks: training, SURE/DOF analysis and theory checks"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "experiment configuration file");
  app.add_option("--seed", g.seed, "seed (replaces the configured seed list)");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--workers", g.workers, "concurrent sweep cells")->check(CLI::PositiveNumber);
  app.add_option("--log-level", g.log_level, "error|warn|info|debug")
      ->check(CLI::IsMember({"error", "warn", "info", "debug"}));

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate-data", "write a synthetic dataset (SUND1)");
  generate->add_option("--kind", gen.kind)->check(CLI::IsMember({"subspace", "sparse"}));
  generate->add_option("--n", gen.n);
  generate->add_option("--rank", gen.rank);
  generate->add_option("--atoms", gen.atoms);
  generate->add_option("--sparsity", gen.sparsity);
  generate->add_option("--count", gen.count);
  generate->add_option("--first-index", gen.first);
  generate->add_option("--sigma", gen.sigma, "also write noisy observations");
  generate->add_option("--output", gen.output);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train one network from the configuration");
  train_cmd->add_option("--mode", tr.mode)->check(CLI::IsMember({"ws", "wc"}));
  train_cmd->add_option("--n-train", tr.n_train);
  train_cmd->add_option("--sigma-index", tr.sigma_index);

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "SURE / DOF / Jacobian report for trained weights");
  evaluate->add_option("--weights", ev.weights)->required();
  evaluate->add_option("--count", ev.count);
  evaluate->add_option("--sigma-index", ev.sigma_index);

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "run (or resume) the configured sweep");
  sweep->add_option("--max-cells", sw.max_cells, "stop after this many new cells");
  sweep->add_flag("--no-weights", sw.no_weights, "do not save per-cell weights");

  std::string verify_command;
  VerifyParams vp;
  auto* verify = app.add_subcommand("verify", "numerical check of one theoretical statement");
  verify->add_option("command", verify_command)
      ->required()
      ->check(CLI::IsMember({"lemma2", "lemma3", "lemma4", "theorem1", "jacobian", "sure-unbiased"}));
  verify->add_option("--trials", vp.trials);
  verify->add_option("--n", vp.n);
  verify->add_option("--width", vp.width);
  verify->add_option("--iterations", vp.iterations);
  verify->add_option("--max-subset", vp.max_subset);
  verify->add_option("--samples", vp.samples);
  verify->add_option("--rank", vp.rank);
  verify->add_option("--sigma", vp.sigma);
  verify->add_option("--tolerance", vp.tolerance);
  verify->add_option("--family", vp.family);

  SpectrumArgs sp;
  auto* spectrum = app.add_subcommand("spectrum", "summed filter magnitude spectrum");
  spectrum->add_option("--kernels", sp.kernels, "JSON list of 2-D kernels");
  spectrum->add_option("--weights", sp.weights, "SUNW1 file; rows of W are the kernels");
  spectrum->add_option("--shape", sp.shape, "RxC shape of each row");
  spectrum->add_option("--pad", sp.pad)->check(CLI::PositiveNumber);
  spectrum->add_option("--set", sp.set);
  spectrum->add_option("--layer", sp.layer);

  std::string report_input;
  auto* report = app.add_subcommand("report", "long-format plot tables from sweep.csv");
  report->add_option("--input", report_input)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }
  g_level = g.log_level == "error" ? Level::error
            : g.log_level == "warn" ? Level::warn
            : g.log_level == "debug" ? Level::debug
                                     : Level::info;

  try {
    if (*generate) return cmd_generate(g, gen);
    if (*train_cmd) return cmd_train(g, tr);
    if (*evaluate) return cmd_evaluate(g, ev);
    if (*sweep) return cmd_sweep(g, sw);
    if (*verify) return cmd_verify(g, verify_command, vp);
    if (*spectrum) return cmd_spectrum(g, sp);
    if (*report) return cmd_report(g, report_input);
  } catch (const ConfigError& e) {
    log(Level::error, e.what());
    return kUsage;
  } catch (const InvalidArgument& e) {
    log(Level::error, e.what());
    return kUsage;
  } catch (const std::exception& e) {
    log(Level::error, e.what());
    return kRuntime;
  }
  return kUsage;
}
