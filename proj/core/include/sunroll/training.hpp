#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <vector>

#include "sunroll/network.hpp"

namespace sunroll {

// Gradients carry the same structure as ProximalStack::weight_sets().
using Gradients = std::vector<WeightSet>;

struct LossAndGradients {
  double loss = 0.0;  // (1/N) sum_i ||xhat_i - x_i||^2
  Gradients grads;
};

// Reverse-mode pass through the unrolled graph. In weight-sharing mode the
// contributions of all T iterations accumulate into the single weight set.
// The ReLU derivative at exactly zero is zero. Throws DivergenceError naming
// the first sample whose loss is non-finite.
LossAndGradients loss_and_gradients(const UnrolledNetwork& net, std::span<const Vector> targets,
                                    std::span<const Vector> measurements);

// Mean ||xhat_i - x_i||^2 without gradients.
double evaluate_loss(const UnrolledNetwork& net, std::span<const Vector> targets,
                     std::span<const Vector> measurements);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  AdamOptions options;
  Gradients first_moment;
  Gradients second_moment;
  long step = 0;
};

OptimizerState make_optimizer_state(const ProximalStack& stack, AdamOptions options);

// Bias-corrected Adam update applied in place.
void adam_step(OptimizerState& state, ProximalStack& stack, const Gradients& grads);

struct ModelSpec {
  WeightMode mode = WeightMode::shared;
  Index iterations = 1;
  std::vector<Index> widths{1};
  bool symmetric = true;
  StepParams step;
};

// 1 / sqrt(max(n, l_max / 2)): keeps E[W^T D W] at most the identity when half
// the units fire.
double default_init_std(Index n, const std::vector<Index>& widths);

struct TrainOptions {
  std::vector<double> learning_rates{3e-4, 1e-3, 3e-3};
  Index epochs = 20;
  Index batch_size = 32;
  Index anneal_epoch = 0;  // 0 disables; otherwise lr *= anneal_factor from this epoch on
  double anneal_factor = 0.1;
  AdamOptions adam;
  double init_std = 0.0;  // <= 0 selects default_init_std
  std::uint64_t seed = 0;
};

// The ten-point grid used for natural-image denoising.
std::vector<double> wide_learning_rate_grid();

struct LearningRateRun {
  double learning_rate = 0.0;
  bool diverged = false;
  std::vector<double> train_loss;
  std::vector<double> test_mse;
};

struct TrainRunResult {
  ProximalStack stack;
  std::vector<double> train_loss{};  // per epoch, mean over the epoch's minibatches
  std::vector<double> test_mse{};    // per epoch, mean ||xhat - x||^2 on held-out data
  double learning_rate = 0.0;
  std::uint64_t seed = 0;
  Index epochs = 0;
  double init_std = 0.0;
  std::vector<LearningRateRun> runs{};  // every grid point, selected one included
};

struct PairedData {
  std::vector<Vector> targets;       // x_i
  std::vector<Vector> measurements;  // y_i
  std::size_t size() const { return targets.size(); }
};

// Minibatch Adam over every learning rate in the grid; returns the run with
// the lowest final held-out loss. Deterministic given options.seed.
TrainRunResult train(const SensingOperator& op, const ModelSpec& model, const PairedData& train_set,
                     const PairedData& test_set, const TrainOptions& options);

nlohmann::json to_json(const TrainRunResult& result);

}  // namespace sunroll
