#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sunroll/config.hpp"

namespace sunroll {

// One (seed, mode, sigma, n_train) cell of a sweep.
struct SweepCell {
  std::uint64_t seed = 0;
  WeightMode mode = WeightMode::shared;
  std::size_t sigma_index = 0;
  Index n_train = 0;

  std::string id() const;
};

// Result row. Inapplicable estimators are NaN and print as "nan".
struct SweepRow {
  std::uint64_t seed = 0;
  WeightMode mode = WeightMode::shared;
  double sigma = 0.0;      // unit scale
  double sigma_raw = 0.0;  // as configured
  Index n_train = 0;
  std::string status = "ok";
  double learning_rate = 0.0;
  double test_mse = 0.0;  // per-coordinate mean over the test set
  double psnr = 0.0;
  double rss_mean = 0.0;        // mean over evaluation inputs of ||h(y) - y||^2
  double rss_norm = 0.0;        // rss_mean / (n sigma^2)
  double dof_exact_mean = 0.0;
  double dof_mc_mean = 0.0;
  double sure_mean = 0.0;       // mean SURE (sum convention)
  double output_norm_mean = 0.0;
  double mu_w = 0.0;
  double rho_max = 0.0;
  double epsilon = 0.0;
  double dof_surrogate = 0.0;
  double theorem1_bound = 0.0;
  double wallclock_s = 0.0;

  bool ok() const { return status == "ok"; }
};

// Column names in CSV order and their descriptions (the schema sidecar).
const std::vector<std::pair<std::string, std::string>>& sweep_columns();
std::vector<std::string> to_csv_fields(const SweepRow& row);

nlohmann::json to_json(const SweepRow& row);
SweepRow sweep_row_from_json(const nlohmann::json& j);

// Cells in canonical order: seed, mode, sigma, n_train.
std::vector<SweepCell> enumerate_cells(const ExperimentConfig& config);

// Trains and evaluates one cell. Training and numerical failures are caught
// and recorded in `status`.
SweepRow run_cell(const ExperimentConfig& config, const SweepCell& cell);

struct SweepOptions {
  // Stop after computing this many new cells (0: no limit); used to exercise
  // interrupt-and-resume.
  std::size_t max_new_cells = 0;
  bool save_weights = true;
  std::function<void(const std::string&)> log;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // canonical order; empty when interrupted
  std::size_t computed = 0;
  std::size_t reused = 0;
  bool complete = false;
};

// Runs every missing cell under config.out/cells (skipping ones already
// present for the same configuration), then writes sweep.csv,
// sweep.schema.json, summary.json and config.ini. Artifacts are a pure
// function of the configuration.
SweepResult run_sweep(const ExperimentConfig& config, const SweepOptions& options = {});

// Per (mode, sigma, n_train) means and standard errors over seeds.
nlohmann::json summarize(const std::vector<SweepRow>& rows);

}  // namespace sunroll
