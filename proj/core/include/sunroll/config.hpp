#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sunroll/dataset.hpp"
#include "sunroll/network.hpp"
#include "sunroll/sensing_operator.hpp"
#include "sunroll/sure.hpp"
#include "sunroll/training.hpp"

namespace sunroll {

enum class OperatorSpecKind { identity, blur, dft };

std::string to_string(OperatorSpecKind kind);

struct OperatorConfig {
  OperatorSpecKind kind = OperatorSpecKind::identity;
  Index rows = 1;  // n = rows * cols; rows = 1 means a 1-D signal
  double blur_std = 1.0;
  Index blur_radius = 2;
  double dft_fraction = 0.5;
  std::uint64_t seed = 0;  // sampling pattern for the DFT kind
  bool operator==(const OperatorConfig&) const = default;
};

struct DataConfig {
  DatasetKind kind = DatasetKind::subspace;
  Index n = 16;
  Index rank = 4;
  Index atoms = 32;
  Index sparsity = 3;
  std::vector<Index> n_train{16, 64, 256, 1024};
  Index n_test = 256;
  Index n_eval = 64;  // test samples used for the SURE and Jacobian statistics
  bool operator==(const DataConfig&) const = default;
};

struct ModelConfig {
  Index iterations = 3;
  Index layers = 1;
  std::vector<Index> widths{16};  // one entry per layer, or a single entry for all
  std::vector<WeightMode> modes{WeightMode::shared, WeightMode::changing};
  bool symmetric = true;
  StepParams step;
  bool operator==(const ModelConfig&) const = default;
};

struct OptimizerConfig {
  std::vector<double> learning_rates{3e-4, 1e-3, 3e-3};
  Index epochs = 20;
  Index batch = 32;
  Index anneal_epoch = 0;
  double anneal_factor = 0.1;
  double init_std = 0.0;  // 0 selects the default
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool operator==(const OptimizerConfig&) const = default;
};

struct EvaluationConfig {
  DofEstimator dof = DofEstimator::exact;
  Index probes = 64;
  ProbeDistribution probe_dist = ProbeDistribution::rademacher;
  bool jacobian = true;
  Index path_cap = 14;
  bool operator==(const EvaluationConfig&) const = default;
};

enum class SigmaUnits { unit, pixel };

struct ExperimentConfig {
  std::vector<double> sigmas{0.1};  // as written; see sigma_units
  SigmaUnits sigma_units = SigmaUnits::unit;
  std::vector<std::uint64_t> seeds{0};
  std::string out = "results";
  Index workers = 1;
  bool record_wallclock = false;
  OperatorConfig op;
  DataConfig data;
  ModelConfig model;
  OptimizerConfig optimizer;
  EvaluationConfig evaluation;

  bool operator==(const ExperimentConfig&) const = default;

  // Noise std on the unit-norm data scale (pixel values are divided by 255).
  double effective_sigma(std::size_t i) const;
  std::vector<Index> layer_widths() const;
};

// INI-style text: top-level keys, then [operator], [data], [model],
// [optimizer], [evaluation] sections of `key = value` lines. Lists are
// comma-separated; '#' starts a comment. Errors carry the field path and
// line number.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Canonical text with every field spelled out; parse_config(to_text(c)) == c.
std::string to_text(const ExperimentConfig& config);

// Whole-config validation, also run by parse_config.
void validate(const ExperimentConfig& config);

SensingOperator build_operator(const ExperimentConfig& config);
ModelSpec build_model(const ExperimentConfig& config, WeightMode mode);
TrainOptions build_train_options(const ExperimentConfig& config, std::uint64_t seed);
SureOptions build_sure_options(const ExperimentConfig& config, std::uint64_t seed);

}  // namespace sunroll
