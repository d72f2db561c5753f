#include "sunroll/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "sunroll/random.hpp"

namespace sunroll {

namespace {

Matrix stack_columns(std::span<const Vector> vectors, Index rows, const std::string& what) {
  Matrix out(rows, static_cast<Index>(vectors.size()));
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    require_length(vectors[i], rows, what);
    out.col(static_cast<Index>(i)) = vectors[i];
  }
  return out;
}

Gradients zeros_like(const ProximalStack& stack) {
  Gradients out;
  for (const auto& set : stack.weight_sets()) {
    WeightSet g;
    for (const auto& layer : set) {
      g.push_back({Matrix::Zero(layer.w.rows(), layer.w.cols()),
                   layer.w_bar.size() ? Matrix(Matrix::Zero(layer.w_bar.rows(), layer.w_bar.cols())) : Matrix()});
    }
    out.push_back(std::move(g));
  }
  return out;
}

struct BatchTape {
  std::vector<std::vector<Matrix>> inputs;  // [t][k] n x B
  std::vector<std::vector<Matrix>> masks;   // [t][k] l x B
  std::vector<std::vector<Matrix>> active;  // [t][k] masked pre-activations
  Matrix output;
};

Matrix apply_state(const DataConsistency& dc, const Matrix& x) {
  if (dc.state_is_scalar()) return dc.state_scale() == 1.0 ? x : Matrix(dc.state_scale() * x);
  return dc.state_jacobian() * x;
}

Matrix apply_state_transpose(const DataConsistency& dc, const Matrix& g) {
  if (dc.state_is_scalar()) return dc.state_scale() == 1.0 ? g : Matrix(dc.state_scale() * g);
  return dc.state_jacobian().transpose() * g;
}

// Column-batched forward pass, identical in arithmetic to unroll_forward.
BatchTape batch_forward(const ProximalStack& stack, const SensingOperator& op, const DataConsistency& dc,
                        const Matrix& y, bool record) {
  BatchTape tape;
  Matrix x = op.kind() == OperatorKind::identity ? y : Matrix(op.matrix().transpose() * y);
  const Matrix b = dc.measurement_jacobian() * y;
  const bool symmetric = stack.symmetric();
  for (Index t = 0; t < stack.iterations(); ++t) {
    Matrix h = apply_state(dc, x) + b;
    if (record) {
      tape.inputs.emplace_back();
      tape.masks.emplace_back();
      tape.active.emplace_back();
    }
    for (const auto& layer : stack.weights_for_iteration(t)) {
      const Matrix z = (symmetric ? layer.w : layer.w_bar) * h;
      Matrix mask = (z.array() > 0.0).cast<double>().matrix();
      Matrix r = mask.cwiseProduct(z);
      Matrix next = symmetric ? Matrix(h - layer.w.transpose() * r) : Matrix(h + layer.w.transpose() * r);
      if (record) {
        tape.inputs.back().push_back(std::move(h));
        tape.masks.back().push_back(std::move(mask));
        tape.active.back().push_back(std::move(r));
      }
      h = std::move(next);
    }
    x = std::move(h);
  }
  tape.output = std::move(x);
  return tape;
}

double mean_loss_checked(const Matrix& residual) {
  const Eigen::VectorXd per_sample = residual.colwise().squaredNorm().transpose();
  for (Index i = 0; i < per_sample.size(); ++i) {
    if (!std::isfinite(per_sample[i]))
      throw DivergenceError("training loss is not finite", static_cast<std::size_t>(i));
  }
  return per_sample.mean();
}


LossAndGradients gradients_impl(const ProximalStack& stack, const SensingOperator& op,
                                const DataConsistency& dc, std::span<const Vector> targets,
                                std::span<const Vector> measurements) {
  if (targets.empty()) throw InvalidArgument("loss: empty batch");
  if (targets.size() != measurements.size())
    throw DimensionError("loss: measurement count", targets.size(), measurements.size());
  if (stack.n() != op.n())
    throw DimensionError("loss: stack input size", static_cast<std::size_t>(op.n()),
                         static_cast<std::size_t>(stack.n()));
  const Matrix x = stack_columns(targets, stack.n(), "loss: target");
  const Matrix y = stack_columns(measurements, op.output_length(), "loss: measurement");
  const BatchTape tape = batch_forward(stack, op, dc, y, true);
  const Matrix residual = tape.output - x;

  LossAndGradients out;
  out.loss = mean_loss_checked(residual);
  out.grads = zeros_like(stack);
  const double scale = 2.0 / static_cast<double>(targets.size());
  Matrix g = scale * residual;
  const bool symmetric = stack.symmetric();
  for (Index t = stack.iterations() - 1; t >= 0; --t) {
    const auto& set = stack.weights_for_iteration(t);
    auto& grad_set = out.grads[stack.mode() == WeightMode::shared ? 0 : static_cast<std::size_t>(t)];
    const auto ti = static_cast<std::size_t>(t);
    for (Index k = static_cast<Index>(set.size()) - 1; k >= 0; --k) {
      const auto ki = static_cast<std::size_t>(k);
      const auto& layer = set[ki];
      const Matrix& h = tape.inputs[ti][ki];
      const Matrix& mask = tape.masks[ti][ki];
      const Matrix& r = tape.active[ti][ki];
      auto& grad = grad_set[ki];
      if (symmetric) {
        // h' = h - W^T D W h
        const Matrix u = mask.cwiseProduct(layer.w * g);
        grad.w.noalias() -= r * g.transpose();
        grad.w.noalias() -= u * h.transpose();
        g -= layer.w.transpose() * u;
      } else {
        // h' = h + W^T D W_bar h
        const Matrix u = mask.cwiseProduct(layer.w * g);
        grad.w.noalias() += r * g.transpose();
        grad.w_bar.noalias() += u * h.transpose();
        g += layer.w_bar.transpose() * u;
      }
    }
    g = apply_state_transpose(dc, g);
  }
  return out;
}

double loss_impl(const ProximalStack& stack, const SensingOperator& op, const DataConsistency& dc,
                 std::span<const Vector> targets, std::span<const Vector> measurements) {
  if (targets.empty()) throw InvalidArgument("loss: empty batch");
  if (targets.size() != measurements.size())
    throw DimensionError("loss: measurement count", targets.size(), measurements.size());
  const Matrix x = stack_columns(targets, stack.n(), "loss: target");
  const Matrix y = stack_columns(measurements, op.output_length(), "loss: measurement");
  return mean_loss_checked(batch_forward(stack, op, dc, y, false).output - x);
}

}  // namespace

LossAndGradients loss_and_gradients(const UnrolledNetwork& net, std::span<const Vector> targets,
                                    std::span<const Vector> measurements) {
  return gradients_impl(net.stack(), net.op(), net.data_consistency(), targets, measurements);
}

double evaluate_loss(const UnrolledNetwork& net, std::span<const Vector> targets,
                     std::span<const Vector> measurements) {
  return loss_impl(net.stack(), net.op(), net.data_consistency(), targets, measurements);
}

OptimizerState make_optimizer_state(const ProximalStack& stack, AdamOptions options) {
  OptimizerState state;
  state.options = options;
  state.first_moment = zeros_like(stack);
  state.second_moment = zeros_like(stack);
  return state;
}

namespace {

void adam_update(Matrix& weight, const Matrix& grad, Matrix& m, Matrix& v, const AdamOptions& o,
                 double correction1, double correction2) {
  if (grad.rows() != weight.rows() || grad.cols() != weight.cols())
    throw DimensionError("adam: gradient shape does not match the weights");
  m = o.beta1 * m + (1.0 - o.beta1) * grad;
  v = o.beta2 * v + (1.0 - o.beta2) * grad.cwiseProduct(grad);
  weight.array() -= o.learning_rate * (m.array() / correction1) /
                    ((v.array() / correction2).sqrt() + o.epsilon);
}

}  // namespace

void adam_step(OptimizerState& state, ProximalStack& stack, const Gradients& grads) {
  if (grads.size() != stack.weight_sets().size() || state.first_moment.size() != grads.size())
    throw DimensionError("adam: gradient structure does not match the weights");
  for (const auto& set : grads)
    for (const auto& layer : set)
      if (!layer.w.allFinite() || !layer.w_bar.allFinite()) throw NumericalError("adam: non-finite gradient");
  state.step += 1;
  const auto& o = state.options;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t s = 0; s < grads.size(); ++s) {
    auto& set = stack.mutable_weight_set(s);
    if (set.size() != grads[s].size()) throw DimensionError("adam: layer count mismatch");
    for (std::size_t k = 0; k < set.size(); ++k) {
      adam_update(set[k].w, grads[s][k].w, state.first_moment[s][k].w, state.second_moment[s][k].w, o, c1, c2);
      if (set[k].w_bar.size())
        adam_update(set[k].w_bar, grads[s][k].w_bar, state.first_moment[s][k].w_bar,
                    state.second_moment[s][k].w_bar, o, c1, c2);
    }
  }
}

double default_init_std(Index n, const std::vector<Index>& widths) {
  Index widest = 0;
  for (Index w : widths) widest = std::max(widest, w);
  return 1.0 / std::sqrt(static_cast<double>(std::max<Index>(n, widest / 2)));
}

std::vector<double> wide_learning_rate_grid() {
  return {0.0075, 0.005, 0.0025, 0.001, 0.00075, 0.0005, 0.00025, 0.0001, 0.000075, 0.00005};
}

namespace {

struct SingleRun {
  LearningRateRun history;
  std::optional<ProximalStack> stack;
};

SingleRun train_one(const SensingOperator& op, const ModelSpec& model, const PairedData& train_set,
                    const PairedData& test_set, const TrainOptions& options, double lr, double init_std) {
  SingleRun run;
  run.history.learning_rate = lr;
  ProximalStack stack = ProximalStack::gaussian(model.mode, op.n(), model.iterations, model.widths,
                                                model.symmetric, init_std, derive_seed(options.seed, 1));
  const DataConsistency dc(op, model.step);
  AdamOptions adam = options.adam;
  adam.learning_rate = lr;
  OptimizerState state = make_optimizer_state(stack, adam);

  const std::size_t count = train_set.size();
  const std::size_t batch = static_cast<std::size_t>(std::max<Index>(1, options.batch_size));
  std::vector<std::size_t> order(count);
  std::vector<Vector> xb, yb;
  try {
    for (Index epoch = 0; epoch < options.epochs; ++epoch) {
      if (options.anneal_epoch > 0 && epoch == options.anneal_epoch)
        state.options.learning_rate = lr * options.anneal_factor;
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng(derive_seed(options.seed, 1000 + static_cast<std::uint64_t>(epoch)));
      rng.shuffle(std::span<std::size_t>(order));
      double loss_sum = 0.0;
      std::size_t batches = 0;
      for (std::size_t start = 0; start < count; start += batch) {
        const std::size_t stop = std::min(count, start + batch);
        xb.clear();
        yb.clear();
        for (std::size_t i = start; i < stop; ++i) {
          xb.push_back(train_set.targets[order[i]]);
          yb.push_back(train_set.measurements[order[i]]);
        }
        LossAndGradients lg = gradients_impl(stack, op, dc, xb, yb);
        adam_step(state, stack, lg.grads);
        loss_sum += lg.loss;
        ++batches;
      }
      run.history.train_loss.push_back(loss_sum / static_cast<double>(batches));
      const double test = loss_impl(stack, op, dc, test_set.targets, test_set.measurements);
      run.history.test_mse.push_back(test);
      if (!std::isfinite(run.history.train_loss.back())) throw DivergenceError("training loss is not finite", 0);
    }
  } catch (const NumericalError&) {
    run.history.diverged = true;
    return run;
  }
  run.stack = std::move(stack);
  return run;
}

}  // namespace

TrainRunResult train(const SensingOperator& op, const ModelSpec& model, const PairedData& train_set,
                     const PairedData& test_set, const TrainOptions& options) {
  if (train_set.size() == 0) throw InvalidArgument("train: empty training set");
  if (test_set.size() == 0) throw InvalidArgument("train: empty held-out set");
  if (train_set.targets.size() != train_set.measurements.size())
    throw DimensionError("train: measurement count", train_set.targets.size(), train_set.measurements.size());
  if (options.learning_rates.empty()) throw InvalidArgument("train: empty learning-rate grid");
  if (options.epochs < 1) throw InvalidArgument("train: epochs must be positive");
  const double init_std = options.init_std > 0.0 ? options.init_std : default_init_std(op.n(), model.widths);

  TrainRunResult result{.stack = ProximalStack::zeros(model.mode, op.n(), model.iterations, model.widths,
                                                     model.symmetric)};
  result.seed = options.seed;
  result.epochs = options.epochs;
  result.init_std = init_std;
  std::optional<std::size_t> best;
  std::optional<ProximalStack> best_stack;
  for (double lr : options.learning_rates) {
    SingleRun run = train_one(op, model, train_set, test_set, options, lr, init_std);
    const bool usable = !run.history.diverged && std::isfinite(run.history.test_mse.back());
    if (usable && (!best || run.history.test_mse.back() < result.runs[*best].test_mse.back())) {
      best = result.runs.size();
      best_stack = std::move(run.stack);
    }
    result.runs.push_back(std::move(run.history));
  }
  if (!best) {
    std::vector<std::vector<double>> histories;
    for (const auto& r : result.runs) histories.push_back(r.train_loss);
    throw TrainingFailure("train: every learning rate diverged", std::move(histories));
  }
  result.stack = std::move(*best_stack);
  result.learning_rate = result.runs[*best].learning_rate;
  result.train_loss = result.runs[*best].train_loss;
  result.test_mse = result.runs[*best].test_mse;
  return result;
}

nlohmann::json to_json(const TrainRunResult& result) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : result.runs) {
    runs.push_back({{"learning_rate", r.learning_rate},
                    {"diverged", r.diverged},
                    {"train_loss", r.train_loss},
                    {"test_mse", r.test_mse}});
  }
  return {{"learning_rate", result.learning_rate},
          {"seed", result.seed},
          {"epochs", result.epochs},
          {"init_std", result.init_std},
          {"train_loss", result.train_loss},
          {"test_mse", result.test_mse},
          {"loss_normalization", "mean over samples of ||xhat - x||^2"},
          {"runs", runs}};
}

}  // namespace sunroll
