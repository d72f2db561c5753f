#include "sunroll/sweep.hpp"

#include <zlib.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

#include "binary_io.hpp"
#include "csv.hpp"
#include "sunroll/dataset.hpp"
#include "sunroll/error.hpp"
#include "sunroll/jacobian.hpp"
#include "sunroll/random.hpp"
#include "sunroll/sure.hpp"
#include "sunroll/training.hpp"
#include "sunroll/weights_io.hpp"

namespace sunroll {

namespace fs = std::filesystem;

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr Index kTestOffset = Index{1} << 40;
constexpr std::uint64_t kTrainNoise = 0x747261696eULL;
constexpr std::uint64_t kTestNoise = 0x74657374ULL;
constexpr std::uint64_t kProbeStream = 0x70726f6265ULL;

nlohmann::json number(double v) {
  if (std::isfinite(v)) return v;
  return detail::format_number(v);
}

double number_from(const nlohmann::json& j) {
  if (j.is_string()) return detail::parse_number(j.get<std::string>());
  return j.get<double>();
}

std::string digest(const ExperimentConfig& config) {
  ExperimentConfig c = config;
  c.out.clear();
  c.workers = 1;
  const std::string text = to_text(c);
  const uLong crc = crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(text.data()),
                          static_cast<uInt>(text.size()));
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

PairedData make_pairs(const SensingOperator& op, const Dataset& data, double sigma, std::uint64_t noise_seed) {
  PairedData out;
  out.targets = data.samples;
  out.measurements.reserve(data.samples.size());
  for (std::size_t i = 0; i < data.samples.size(); ++i)
    out.measurements.push_back(add_noise(op.forward(data.samples[i]), sigma, noise_seed, static_cast<Index>(i)));
  return out;
}

Dataset make_data(const ExperimentConfig& c, Index count, std::uint64_t seed, Index first) {
  if (c.data.kind == DatasetKind::subspace) return generate_subspace_data(c.data.n, c.data.rank, count, seed, first);
  return generate_sparse_data(c.data.n, c.data.atoms, c.data.sparsity, count, seed, first);
}

void fill_nan(SweepRow& row) {
  for (double* f : {&row.learning_rate, &row.test_mse, &row.psnr, &row.rss_mean, &row.rss_norm, &row.dof_exact_mean,
                    &row.dof_mc_mean, &row.sure_mean, &row.output_norm_mean, &row.mu_w, &row.rho_max, &row.epsilon,
                    &row.dof_surrogate, &row.theorem1_bound})
    *f = kNan;
}

std::string first_line(const std::string& text) {
  std::string out = text.substr(0, text.find('\n'));
  for (char& ch : out)
    if (ch == ',' || ch == '"') ch = ';';
  return out;
}

}  // namespace

std::string SweepCell::id() const {
  return "seed" + std::to_string(seed) + "_" + to_string(mode) + "_sigma" + std::to_string(sigma_index) + "_n" +
         std::to_string(n_train);
}

const std::vector<std::pair<std::string, std::string>>& sweep_columns() {
  static const std::vector<std::pair<std::string, std::string>> columns = {
      {"seed", "run seed (data, initialization, minibatch order, probes)"},
      {"mode", "ws = one weight set shared by all iterations, wc = one set per iteration"},
      {"sigma", "noise standard deviation on the unit-norm data scale"},
      {"sigma_raw", "noise standard deviation as configured (pixel units are divided by 255 to give sigma)"},
      {"n_train", "number of training pairs"},
      {"status", "ok, or the failure that stopped this cell"},
      {"learning_rate", "learning rate selected by the lowest final held-out loss"},
      {"test_mse", "per-coordinate mean squared error ||xhat - x||^2 / n averaged over the test set"},
      {"psnr", "-10 log10(test_mse) in dB for unit-peak signals"},
      {"rss_mean", "mean over evaluation inputs of the residual sum ||h(y) - y||^2 (un-normalized)"},
      {"rss_norm", "rss_mean / (n sigma^2)"},
      {"dof_exact_mean", "mean trace of the end-to-end Jacobian over evaluation inputs"},
      {"dof_mc_mean", "mean Monte-Carlo divergence estimate (nan unless evaluation.dof = mc)"},
      {"sure_mean", "mean SURE value -n sigma^2 + rss + 2 sigma^2 dof (sum convention, primary dof estimator)"},
      {"output_norm_mean", "mean ||h(y)|| over evaluation inputs"},
      {"mu_w", "incoherence: largest off-diagonal |[W W^T]_ij| (nan when the path expansion does not apply)"},
      {"rho_max", "largest per-iteration mean number of active units"},
      {"epsilon", "mu_w * rho_max^1.5"},
      {"dof_surrogate", "n + sum over index sets of (-1)^|I| times the mean weighted path sparsity"},
      {"theorem1_bound", "(1 + epsilon)^T - 1 - epsilon T"},
      {"wallclock_s", "cell wall time in seconds (nan unless record_wallclock = true)"},
  };
  return columns;
}

std::vector<std::string> to_csv_fields(const SweepRow& r) {
  using detail::format_number;
  return {std::to_string(r.seed),          to_string(r.mode),
          format_number(r.sigma),          format_number(r.sigma_raw),
          std::to_string(r.n_train),       r.status,
          format_number(r.learning_rate),  format_number(r.test_mse),
          format_number(r.psnr),           format_number(r.rss_mean),
          format_number(r.rss_norm),       format_number(r.dof_exact_mean),
          format_number(r.dof_mc_mean),    format_number(r.sure_mean),
          format_number(r.output_norm_mean), format_number(r.mu_w),
          format_number(r.rho_max),        format_number(r.epsilon),
          format_number(r.dof_surrogate),  format_number(r.theorem1_bound),
          format_number(r.wallclock_s)};
}

nlohmann::json to_json(const SweepRow& r) {
  return {{"seed", r.seed},
          {"mode", to_string(r.mode)},
          {"sigma", number(r.sigma)},
          {"sigma_raw", number(r.sigma_raw)},
          {"n_train", r.n_train},
          {"status", r.status},
          {"learning_rate", number(r.learning_rate)},
          {"test_mse", number(r.test_mse)},
          {"psnr", number(r.psnr)},
          {"rss_mean", number(r.rss_mean)},
          {"rss_norm", number(r.rss_norm)},
          {"dof_exact_mean", number(r.dof_exact_mean)},
          {"dof_mc_mean", number(r.dof_mc_mean)},
          {"sure_mean", number(r.sure_mean)},
          {"output_norm_mean", number(r.output_norm_mean)},
          {"mu_w", number(r.mu_w)},
          {"rho_max", number(r.rho_max)},
          {"epsilon", number(r.epsilon)},
          {"dof_surrogate", number(r.dof_surrogate)},
          {"theorem1_bound", number(r.theorem1_bound)},
          {"wallclock_s", number(r.wallclock_s)}};
}

SweepRow sweep_row_from_json(const nlohmann::json& j) {
  SweepRow r;
  r.seed = j.at("seed").get<std::uint64_t>();
  r.mode = parse_weight_mode(j.at("mode").get<std::string>());
  r.sigma = number_from(j.at("sigma"));
  r.sigma_raw = number_from(j.at("sigma_raw"));
  r.n_train = j.at("n_train").get<Index>();
  r.status = j.at("status").get<std::string>();
  r.learning_rate = number_from(j.at("learning_rate"));
  r.test_mse = number_from(j.at("test_mse"));
  r.psnr = number_from(j.at("psnr"));
  r.rss_mean = number_from(j.at("rss_mean"));
  r.rss_norm = number_from(j.at("rss_norm"));
  r.dof_exact_mean = number_from(j.at("dof_exact_mean"));
  r.dof_mc_mean = number_from(j.at("dof_mc_mean"));
  r.sure_mean = number_from(j.at("sure_mean"));
  r.output_norm_mean = number_from(j.at("output_norm_mean"));
  r.mu_w = number_from(j.at("mu_w"));
  r.rho_max = number_from(j.at("rho_max"));
  r.epsilon = number_from(j.at("epsilon"));
  r.dof_surrogate = number_from(j.at("dof_surrogate"));
  r.theorem1_bound = number_from(j.at("theorem1_bound"));
  r.wallclock_s = number_from(j.at("wallclock_s"));
  return r;
}

std::vector<SweepCell> enumerate_cells(const ExperimentConfig& config) {
  std::vector<SweepCell> cells;
  for (std::uint64_t seed : config.seeds)
    for (WeightMode mode : config.model.modes)
      for (std::size_t s = 0; s < config.sigmas.size(); ++s)
        for (Index n_train : config.data.n_train) cells.push_back({seed, mode, s, n_train});
  return cells;
}

namespace {

struct CellOutput {
  SweepRow row;
  nlohmann::json training;
  std::optional<ProximalStack> stack;
};

CellOutput compute_cell(const ExperimentConfig& c, const SweepCell& cell) {
  const auto start = std::chrono::steady_clock::now();
  CellOutput out;
  SweepRow& row = out.row;
  row.seed = cell.seed;
  row.mode = cell.mode;
  row.sigma = c.effective_sigma(cell.sigma_index);
  row.sigma_raw = c.sigmas.at(cell.sigma_index);
  row.n_train = cell.n_train;
  fill_nan(row);
  row.wallclock_s = kNan;
  try {
    const SensingOperator op = build_operator(c);
    const double sigma = row.sigma;
    const std::uint64_t noise_seed = derive_seed(cell.seed, cell.sigma_index);
    const PairedData train_set =
        make_pairs(op, make_data(c, cell.n_train, cell.seed, 0), sigma, derive_seed(noise_seed, kTrainNoise));
    const PairedData test_set =
        make_pairs(op, make_data(c, c.data.n_test, cell.seed, kTestOffset), sigma, derive_seed(noise_seed, kTestNoise));

    TrainRunResult trained = train(op, build_model(c, cell.mode), train_set, test_set, build_train_options(c, cell.seed));
    out.training = to_json(trained);
    row.learning_rate = trained.learning_rate;
    const UnrolledNetwork net(trained.stack, op, c.model.step);

    const Index n = op.n();
    double err = 0.0;
    for (std::size_t i = 0; i < test_set.size(); ++i)
      err += (net(test_set.measurements[i]) - test_set.targets[i]).squaredNorm();
    row.test_mse = err / (static_cast<double>(test_set.size()) * static_cast<double>(n));
    row.psnr = row.test_mse > 0.0 ? -10.0 * std::log10(row.test_mse) : std::numeric_limits<double>::infinity();

    const std::size_t n_eval = static_cast<std::size_t>(c.data.n_eval);
    std::vector<Vector> eval_inputs(test_set.measurements.begin(),
                                    test_set.measurements.begin() + static_cast<std::ptrdiff_t>(n_eval));
    if (op.is_square()) {
      double rss_sum = 0.0, dof_sum = 0.0, mc_sum = 0.0, sure_sum = 0.0, norm_sum = 0.0;
      bool have_mc = false;
      for (std::size_t i = 0; i < n_eval; ++i) {
        const SureOptions so = build_sure_options(c, derive_seed(derive_seed(cell.seed, kProbeStream), i));
        const SureReport rep = evaluate_sure(net, eval_inputs[i], sigma, so, &test_set.targets[i]);
        rss_sum += rep.rss;
        dof_sum += rep.dof_exact.value_or(kNan);
        if (rep.dof_mc) {
          mc_sum += *rep.dof_mc;
          have_mc = true;
        }
        sure_sum += rep.sure;
        norm_sum += rep.output_norm;
      }
      const double k = static_cast<double>(n_eval);
      row.rss_mean = rss_sum / k;
      row.rss_norm = row.rss_mean / (static_cast<double>(n) * sigma * sigma);
      row.dof_exact_mean = dof_sum / k;
      row.dof_mc_mean = have_mc ? mc_sum / k : kNan;
      row.sure_mean = sure_sum / k;
      row.output_norm_mean = norm_sum / k;
    }

    if (c.evaluation.jacobian && path_expansion_applicable(net) && c.model.iterations <= c.evaluation.path_cap) {
      const JacobianReport rep = analyze_jacobian_expected(net, eval_inputs, c.evaluation.path_cap);
      row.mu_w = rep.mu_w;
      row.rho_max = 0.0;
      for (double r : rep.rho) row.rho_max = std::max(row.rho_max, r);
      row.epsilon = rep.epsilon;
      row.dof_surrogate = rep.surrogate;
      row.theorem1_bound = rep.bound;
    }
    out.stack = std::move(trained.stack);
  } catch (const TrainingFailure& e) {
    row.status = "training-failed: " + first_line(e.what());
  } catch (const Error& e) {
    row.status = "failed: " + first_line(e.what());
  }
  if (c.record_wallclock)
    row.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? kNan : s / static_cast<double>(v.size());
}

double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return kNan;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace

SweepRow run_cell(const ExperimentConfig& config, const SweepCell& cell) { return compute_cell(config, cell).row; }

nlohmann::json summarize(const std::vector<SweepRow>& rows) {
  using Key = std::tuple<std::string, double, Index>;
  std::map<Key, std::vector<const SweepRow*>> groups;
  std::vector<Key> order;
  for (const auto& r : rows) {
    Key key{to_string(r.mode), r.sigma, r.n_train};
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  static const std::vector<std::pair<std::string, double SweepRow::*>> fields = {
      {"test_mse", &SweepRow::test_mse},       {"psnr", &SweepRow::psnr},
      {"rss_mean", &SweepRow::rss_mean},       {"rss_norm", &SweepRow::rss_norm},
      {"dof_exact_mean", &SweepRow::dof_exact_mean}, {"dof_mc_mean", &SweepRow::dof_mc_mean},
      {"sure_mean", &SweepRow::sure_mean},     {"mu_w", &SweepRow::mu_w},
      {"epsilon", &SweepRow::epsilon},         {"dof_surrogate", &SweepRow::dof_surrogate},
      {"theorem1_bound", &SweepRow::theorem1_bound}};
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& key : order) {
    const auto& members = groups[key];
    nlohmann::json cell = {{"mode", std::get<0>(key)},
                           {"sigma", number(std::get<1>(key))},
                           {"n_train", std::get<2>(key)},
                           {"seeds", members.size()}};
    std::size_t ok = 0;
    for (const auto* r : members) ok += r->ok() ? 1 : 0;
    cell["seeds_ok"] = ok;
    for (const auto& [name, member] : fields) {
      std::vector<double> values;
      for (const auto* r : members)
        if (r->ok() && std::isfinite(r->*member)) values.push_back(r->*member);
      cell[name] = {{"mean", number(mean_of(values))}, {"stderr", number(stderr_of(values))}, {"count", values.size()}};
    }
    cells.push_back(std::move(cell));
  }
  return {{"normalization",
           {{"test_mse", "per-coordinate mean"}, {"rss_mean", "sum over coordinates"}, {"sure_mean", "sum over coordinates"}}},
          {"cells", cells}};
}

SweepResult run_sweep(const ExperimentConfig& config, const SweepOptions& options) {
  validate(config);
  const fs::path root(config.out);
  const fs::path cell_dir = root / "cells";
  const fs::path weight_dir = root / "weights";
  fs::create_directories(cell_dir);
  const std::string config_digest = digest(config);
  auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };

  const std::vector<SweepCell> cells = enumerate_cells(config);
  std::vector<std::optional<SweepRow>> rows(cells.size());
  std::vector<std::size_t> pending;
  SweepResult result;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const fs::path file = cell_dir / (cells[i].id() + ".json");
    if (fs::exists(file)) {
      try {
        const auto j = nlohmann::json::parse(detail::read_file(file.string()));
        if (j.at("config_digest").get<std::string>() == config_digest) {
          rows[i] = sweep_row_from_json(j.at("row"));
          ++result.reused;
          continue;
        }
      } catch (const std::exception&) {
        // unreadable or stale: recompute
      }
    }
    pending.push_back(i);
  }
  if (options.max_new_cells > 0 && pending.size() > options.max_new_cells) pending.resize(options.max_new_cells);
  log("sweep: " + std::to_string(cells.size()) + " cells, " + std::to_string(result.reused) + " reused, " +
      std::to_string(pending.size()) + " to run");

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr failure;
  auto worker = [&]() {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= pending.size()) return;
      const std::size_t i = pending[k];
      try {
        CellOutput out = compute_cell(config, cells[i]);
        if (out.stack && options.save_weights) save_weights((weight_dir / (cells[i].id() + ".sunw")).string(), *out.stack);
        const nlohmann::json j = {{"cell", cells[i].id()},
                                  {"config_digest", config_digest},
                                  {"row", to_json(out.row)},
                                  {"training", out.training}};
        detail::write_file_atomic((cell_dir / (cells[i].id() + ".json")).string(), j.dump(2) + "\n");
        std::lock_guard lock(mu);
        log("cell " + cells[i].id() + ": " + out.row.status);
        rows[i] = std::move(out.row);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(config.workers), std::max<std::size_t>(pending.size(), 1));
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
  result.computed = pending.size();

  for (const auto& r : rows)
    if (!r) return result;
  result.complete = true;
  detail::CsvTable table;
  for (const auto& [name, desc] : sweep_columns()) table.header.push_back(name);
  for (auto& r : rows) {
    table.rows.push_back(to_csv_fields(*r));
    result.rows.push_back(std::move(*r));
  }
  detail::write_file_atomic((root / "sweep.csv").string(), detail::write_csv(table));

  nlohmann::json schema = {{"file", "sweep.csv"}, {"columns", nlohmann::json::array()}};
  for (const auto& [name, desc] : sweep_columns()) schema["columns"].push_back({{"name", name}, {"description", desc}});
  detail::write_file_atomic((root / "sweep.schema.json").string(), schema.dump(2) + "\n");
  detail::write_file_atomic((root / "summary.json").string(), summarize(result.rows).dump(2) + "\n");
  detail::write_file_atomic((root / "config.ini").string(), to_text(config));
  return result;
}

}  // namespace sunroll
