#include "sunroll/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "binary_io.hpp"
#include "sunroll/error.hpp"

namespace sunroll {

namespace {

using Lines = std::map<std::string, int>;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

struct Field {
  std::string path;
  int line;

  [[noreturn]] void fail(const std::string& message) const { throw ConfigError(path, line, message); }

  double real(const std::string& v) const {
    double out = 0.0;
    const char* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (v.empty() || ec != std::errc() || ptr != end) fail("expected a number, got '" + v + "'");
    if (!std::isfinite(out)) fail("value must be finite");
    return out;
  }
  Index integer(const std::string& v) const {
    long long out = 0;
    const char* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (v.empty() || ec != std::errc() || ptr != end) fail("expected an integer, got '" + v + "'");
    return static_cast<Index>(out);
  }
  std::uint64_t u64(const std::string& v) const {
    std::uint64_t out = 0;
    const char* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (v.empty() || ec != std::errc() || ptr != end) fail("expected a non-negative integer, got '" + v + "'");
    return out;
  }
  bool boolean(const std::string& v) const {
    if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
    if (v == "false" || v == "no" || v == "off" || v == "0") return false;
    fail("expected true or false, got '" + v + "'");
  }
  template <class T, class F>
  std::vector<T> list(const std::string& v, F&& one) const {
    std::vector<T> out;
    for (const auto& item : split_list(v)) out.push_back(one(item));
    if (out.empty()) fail("expected a non-empty list");
    return out;
  }
  template <class F>
  auto wrap(F&& f, const std::string& v) const {
    try {
      return f(v);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      fail(e.what());
    }
  }
};

using Setter = std::function<void(ExperimentConfig&, const Field&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"sigma", [](auto& c, const Field& f, const auto& v) {
         c.sigmas = f.list<double>(v, [&](const std::string& s) { return f.real(s); });
       }},
      {"sigma_units", [](auto& c, const Field& f, const auto& v) {
         if (v == "unit") c.sigma_units = SigmaUnits::unit;
         else if (v == "pixel") c.sigma_units = SigmaUnits::pixel;
         else f.fail("expected unit or pixel, got '" + v + "'");
       }},
      {"seeds", [](auto& c, const Field& f, const auto& v) {
         c.seeds = f.list<std::uint64_t>(v, [&](const std::string& s) { return f.u64(s); });
       }},
      {"out", [](auto& c, const Field& f, const auto& v) {
         if (v.empty()) f.fail("expected a directory");
         c.out = v;
       }},
      {"workers", [](auto& c, const Field& f, const auto& v) { c.workers = f.integer(v); }},
      {"record_wallclock", [](auto& c, const Field& f, const auto& v) { c.record_wallclock = f.boolean(v); }},

      {"operator.kind", [](auto& c, const Field& f, const auto& v) {
         if (v == "identity") c.op.kind = OperatorSpecKind::identity;
         else if (v == "blur") c.op.kind = OperatorSpecKind::blur;
         else if (v == "dft") c.op.kind = OperatorSpecKind::dft;
         else f.fail("expected identity, blur or dft, got '" + v + "'");
       }},
      {"operator.rows", [](auto& c, const Field& f, const auto& v) { c.op.rows = f.integer(v); }},
      {"operator.blur_std", [](auto& c, const Field& f, const auto& v) { c.op.blur_std = f.real(v); }},
      {"operator.blur_radius", [](auto& c, const Field& f, const auto& v) { c.op.blur_radius = f.integer(v); }},
      {"operator.dft_fraction", [](auto& c, const Field& f, const auto& v) { c.op.dft_fraction = f.real(v); }},
      {"operator.seed", [](auto& c, const Field& f, const auto& v) { c.op.seed = f.u64(v); }},

      {"data.kind", [](auto& c, const Field& f, const auto& v) {
         if (v == "subspace") c.data.kind = DatasetKind::subspace;
         else if (v == "sparse") c.data.kind = DatasetKind::sparse;
         else f.fail("expected subspace or sparse, got '" + v + "'");
       }},
      {"data.n", [](auto& c, const Field& f, const auto& v) { c.data.n = f.integer(v); }},
      {"data.rank", [](auto& c, const Field& f, const auto& v) { c.data.rank = f.integer(v); }},
      {"data.atoms", [](auto& c, const Field& f, const auto& v) { c.data.atoms = f.integer(v); }},
      {"data.sparsity", [](auto& c, const Field& f, const auto& v) { c.data.sparsity = f.integer(v); }},
      {"data.n_train", [](auto& c, const Field& f, const auto& v) {
         c.data.n_train = f.list<Index>(v, [&](const std::string& s) { return f.integer(s); });
       }},
      {"data.n_test", [](auto& c, const Field& f, const auto& v) { c.data.n_test = f.integer(v); }},
      {"data.n_eval", [](auto& c, const Field& f, const auto& v) { c.data.n_eval = f.integer(v); }},

      {"model.iterations", [](auto& c, const Field& f, const auto& v) { c.model.iterations = f.integer(v); }},
      {"model.layers", [](auto& c, const Field& f, const auto& v) { c.model.layers = f.integer(v); }},
      {"model.widths", [](auto& c, const Field& f, const auto& v) {
         c.model.widths = f.list<Index>(v, [&](const std::string& s) { return f.integer(s); });
       }},
      {"model.modes", [](auto& c, const Field& f, const auto& v) {
         c.model.modes = f.list<WeightMode>(v, [&](const std::string& s) { return f.wrap(parse_weight_mode, s); });
       }},
      {"model.symmetric", [](auto& c, const Field& f, const auto& v) { c.model.symmetric = f.boolean(v); }},
      {"model.alpha", [](auto& c, const Field& f, const auto& v) { c.model.step.alpha = f.real(v); }},
      {"model.step", [](auto& c, const Field& f, const auto& v) { c.model.step.kind = f.wrap(parse_step_kind, v); }},

      {"optimizer.learning_rates", [](auto& c, const Field& f, const auto& v) {
         if (v == "wide") {
           c.optimizer.learning_rates = wide_learning_rate_grid();
           return;
         }
         c.optimizer.learning_rates = f.list<double>(v, [&](const std::string& s) { return f.real(s); });
       }},
      {"optimizer.epochs", [](auto& c, const Field& f, const auto& v) { c.optimizer.epochs = f.integer(v); }},
      {"optimizer.batch", [](auto& c, const Field& f, const auto& v) { c.optimizer.batch = f.integer(v); }},
      {"optimizer.anneal_epoch", [](auto& c, const Field& f, const auto& v) { c.optimizer.anneal_epoch = f.integer(v); }},
      {"optimizer.anneal_factor", [](auto& c, const Field& f, const auto& v) { c.optimizer.anneal_factor = f.real(v); }},
      {"optimizer.init_std", [](auto& c, const Field& f, const auto& v) { c.optimizer.init_std = f.real(v); }},
      {"optimizer.beta1", [](auto& c, const Field& f, const auto& v) { c.optimizer.beta1 = f.real(v); }},
      {"optimizer.beta2", [](auto& c, const Field& f, const auto& v) { c.optimizer.beta2 = f.real(v); }},
      {"optimizer.epsilon", [](auto& c, const Field& f, const auto& v) { c.optimizer.epsilon = f.real(v); }},

      {"evaluation.dof", [](auto& c, const Field& f, const auto& v) { c.evaluation.dof = f.wrap(parse_dof_estimator, v); }},
      {"evaluation.probes", [](auto& c, const Field& f, const auto& v) { c.evaluation.probes = f.integer(v); }},
      {"evaluation.probe_dist", [](auto& c, const Field& f, const auto& v) {
         c.evaluation.probe_dist = f.wrap(parse_probe_distribution, v);
       }},
      {"evaluation.jacobian", [](auto& c, const Field& f, const auto& v) { c.evaluation.jacobian = f.boolean(v); }},
      {"evaluation.path_cap", [](auto& c, const Field& f, const auto& v) { c.evaluation.path_cap = f.integer(v); }},
  };
  return table;
}

void validate_impl(const ExperimentConfig& c, const Lines& lines) {
  auto fail = [&](const std::string& path, const std::string& message) {
    auto it = lines.find(path);
    throw ConfigError(path, it == lines.end() ? 0 : it->second, message);
  };
  for (double s : c.sigmas)
    if (!(s > 0.0)) fail("sigma", "must be positive");
  if (c.seeds.empty()) fail("seeds", "needs at least one seed");
  if (c.workers < 1) fail("workers", "must be at least 1");

  const Index n = c.data.n;
  if (n < 1) fail("data.n", "must be positive");
  if (c.op.rows < 1 || n % c.op.rows != 0) fail("operator.rows", "must divide data.n");
  if (!(c.op.blur_std > 0.0)) fail("operator.blur_std", "must be positive");
  if (c.op.blur_radius < 0) fail("operator.blur_radius", "must be >= 0");
  if (!(c.op.dft_fraction > 0.0 && c.op.dft_fraction <= 1.0)) fail("operator.dft_fraction", "must be in (0, 1]");
  if (c.op.kind == OperatorSpecKind::dft && c.model.step.kind == StepKind::deblur)
    fail("model.step", "deblur-ls needs a square operator");

  if (c.data.kind == DatasetKind::subspace && (c.data.rank < 1 || c.data.rank > n))
    fail("data.rank", "must satisfy 1 <= rank <= n");
  if (c.data.kind == DatasetKind::sparse) {
    if (c.data.atoms < 1) fail("data.atoms", "must be positive");
    if (c.data.sparsity < 1 || c.data.sparsity > c.data.atoms) fail("data.sparsity", "must satisfy 1 <= k <= atoms");
  }
  if (c.data.n_train.empty()) fail("data.n_train", "needs at least one size");
  for (std::size_t i = 0; i < c.data.n_train.size(); ++i) {
    if (c.data.n_train[i] < 1) fail("data.n_train", "sizes must be positive");
    if (i > 0 && c.data.n_train[i] <= c.data.n_train[i - 1]) fail("data.n_train", "must be strictly increasing");
  }
  if (c.data.n_test < 1) fail("data.n_test", "must be positive");
  if (c.data.n_eval < 1 || c.data.n_eval > c.data.n_test) fail("data.n_eval", "must satisfy 1 <= n_eval <= n_test");

  if (c.model.iterations < 1) fail("model.iterations", "must be at least 1");
  if (c.model.layers < 1) fail("model.layers", "must be at least 1");
  if (c.model.widths.size() != 1 && static_cast<Index>(c.model.widths.size()) != c.model.layers)
    fail("model.widths", "needs one width or one per layer");
  for (Index w : c.model.widths)
    if (w < 1) fail("model.widths", "widths must be positive");
  if (c.model.modes.empty()) fail("model.modes", "needs at least one mode");
  const double alpha = c.model.step.alpha;
  if (c.model.step.kind == StepKind::least_squares && !(alpha >= 0.0 && alpha <= 1.0))
    fail("model.alpha", "least-squares mixing needs 0 <= alpha <= 1");
  if (c.model.step.kind == StepKind::deblur && !(alpha > 0.0)) fail("model.alpha", "deblur-ls needs alpha > 0");

  if (c.optimizer.learning_rates.empty()) fail("optimizer.learning_rates", "needs at least one rate");
  for (double lr : c.optimizer.learning_rates)
    if (!(lr > 0.0)) fail("optimizer.learning_rates", "rates must be positive");
  if (c.optimizer.epochs < 1) fail("optimizer.epochs", "must be at least 1");
  if (c.optimizer.batch < 1) fail("optimizer.batch", "must be at least 1");
  if (c.optimizer.anneal_epoch < 0) fail("optimizer.anneal_epoch", "must be >= 0");
  if (!(c.optimizer.anneal_factor > 0.0)) fail("optimizer.anneal_factor", "must be positive");
  if (c.optimizer.init_std < 0.0) fail("optimizer.init_std", "must be >= 0");
  if (!(c.optimizer.beta1 >= 0.0 && c.optimizer.beta1 < 1.0)) fail("optimizer.beta1", "must be in [0, 1)");
  if (!(c.optimizer.beta2 >= 0.0 && c.optimizer.beta2 < 1.0)) fail("optimizer.beta2", "must be in [0, 1)");
  if (!(c.optimizer.epsilon > 0.0)) fail("optimizer.epsilon", "must be positive");

  if (c.evaluation.probes < 1) fail("evaluation.probes", "must be at least 1");
  if (c.evaluation.path_cap < 1 || c.evaluation.path_cap > 20) fail("evaluation.path_cap", "must be in [1, 20]");
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T, class F>
std::string join(const std::vector<T>& items, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += fmt(items[i]);
  }
  return out;
}

}  // namespace

std::string to_string(OperatorSpecKind kind) {
  switch (kind) {
    case OperatorSpecKind::identity: return "identity";
    case OperatorSpecKind::blur: return "blur";
    case OperatorSpecKind::dft: return "dft";
  }
  return "unknown";
}

double ExperimentConfig::effective_sigma(std::size_t i) const {
  const double raw = sigmas.at(i);
  return sigma_units == SigmaUnits::pixel ? raw / 255.0 : raw;
}

std::vector<Index> ExperimentConfig::layer_widths() const {
  if (model.widths.size() == 1) return std::vector<Index>(static_cast<std::size_t>(model.layers), model.widths.front());
  return model.widths;
}

void validate(const ExperimentConfig& config) { validate_impl(config, {}); }

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig config;
  Lines lines;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("", line_no, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      static const char* known[] = {"operator", "data", "model", "optimizer", "evaluation"};
      if (std::find(std::begin(known), std::end(known), section) == std::end(known))
        throw ConfigError(section, line_no, "unknown section");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("", line_no, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string path = section.empty() ? key : section + "." + key;
    const auto& table = setters();
    const auto it = table.find(path);
    if (it == table.end()) throw ConfigError(path, line_no, "unknown key");
    if (lines.count(path)) throw ConfigError(path, line_no, "duplicate key (first set on line " + std::to_string(lines[path]) + ")");
    lines[path] = line_no;
    it->second(config, Field{path, line_no}, value);
  }
  validate_impl(config, lines);
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  try {
    return parse_config(detail::read_file(path));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("", 0, e.what());
  }
}

std::string to_text(const ExperimentConfig& c) {
  std::ostringstream o;
  auto idx = [](Index v) { return std::to_string(v); };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  o << "sigma = " << join(c.sigmas, num) << "\n";
  o << "sigma_units = " << (c.sigma_units == SigmaUnits::pixel ? "pixel" : "unit") << "\n";
  o << "seeds = " << join(c.seeds, [](std::uint64_t s) { return std::to_string(s); }) << "\n";
  o << "out = " << c.out << "\n";
  o << "workers = " << c.workers << "\n";
  o << "record_wallclock = " << b(c.record_wallclock) << "\n";
  o << "\n[operator]\n";
  o << "kind = " << to_string(c.op.kind) << "\n";
  o << "rows = " << c.op.rows << "\n";
  o << "blur_std = " << num(c.op.blur_std) << "\n";
  o << "blur_radius = " << c.op.blur_radius << "\n";
  o << "dft_fraction = " << num(c.op.dft_fraction) << "\n";
  o << "seed = " << c.op.seed << "\n";
  o << "\n[data]\n";
  o << "kind = " << to_string(c.data.kind) << "\n";
  o << "n = " << c.data.n << "\n";
  o << "rank = " << c.data.rank << "\n";
  o << "atoms = " << c.data.atoms << "\n";
  o << "sparsity = " << c.data.sparsity << "\n";
  o << "n_train = " << join(c.data.n_train, idx) << "\n";
  o << "n_test = " << c.data.n_test << "\n";
  o << "n_eval = " << c.data.n_eval << "\n";
  o << "\n[model]\n";
  o << "iterations = " << c.model.iterations << "\n";
  o << "layers = " << c.model.layers << "\n";
  o << "widths = " << join(c.model.widths, idx) << "\n";
  o << "modes = " << join(c.model.modes, [](WeightMode m) { return to_string(m); }) << "\n";
  o << "symmetric = " << b(c.model.symmetric) << "\n";
  o << "alpha = " << num(c.model.step.alpha) << "\n";
  o << "step = " << to_string(c.model.step.kind) << "\n";
  o << "\n[optimizer]\n";
  o << "learning_rates = " << join(c.optimizer.learning_rates, num) << "\n";
  o << "epochs = " << c.optimizer.epochs << "\n";
  o << "batch = " << c.optimizer.batch << "\n";
  o << "anneal_epoch = " << c.optimizer.anneal_epoch << "\n";
  o << "anneal_factor = " << num(c.optimizer.anneal_factor) << "\n";
  o << "init_std = " << num(c.optimizer.init_std) << "\n";
  o << "beta1 = " << num(c.optimizer.beta1) << "\n";
  o << "beta2 = " << num(c.optimizer.beta2) << "\n";
  o << "epsilon = " << num(c.optimizer.epsilon) << "\n";
  o << "\n[evaluation]\n";
  o << "dof = " << to_string(c.evaluation.dof) << "\n";
  o << "probes = " << c.evaluation.probes << "\n";
  o << "probe_dist = " << to_string(c.evaluation.probe_dist) << "\n";
  o << "jacobian = " << b(c.evaluation.jacobian) << "\n";
  o << "path_cap = " << c.evaluation.path_cap << "\n";
  return o.str();
}

SensingOperator build_operator(const ExperimentConfig& c) {
  const Index n = c.data.n;
  const ImageShape shape{c.op.rows, n / c.op.rows};
  switch (c.op.kind) {
    case OperatorSpecKind::identity: return SensingOperator::identity(n);
    case OperatorSpecKind::blur: return SensingOperator::gaussian_blur(shape, c.op.blur_std, c.op.blur_radius);
    case OperatorSpecKind::dft: return SensingOperator::variable_density_dft(shape, c.op.dft_fraction, c.op.seed);
  }
  throw ConfigError("operator.kind", 0, "unsupported operator");
}

ModelSpec build_model(const ExperimentConfig& c, WeightMode mode) {
  ModelSpec spec;
  spec.mode = mode;
  spec.iterations = c.model.iterations;
  spec.widths = c.layer_widths();
  spec.symmetric = c.model.symmetric;
  spec.step = c.model.step;
  return spec;
}

TrainOptions build_train_options(const ExperimentConfig& c, std::uint64_t seed) {
  TrainOptions o;
  o.learning_rates = c.optimizer.learning_rates;
  o.epochs = c.optimizer.epochs;
  o.batch_size = c.optimizer.batch;
  o.anneal_epoch = c.optimizer.anneal_epoch;
  o.anneal_factor = c.optimizer.anneal_factor;
  o.adam.beta1 = c.optimizer.beta1;
  o.adam.beta2 = c.optimizer.beta2;
  o.adam.epsilon = c.optimizer.epsilon;
  o.init_std = c.optimizer.init_std;
  o.seed = seed;
  return o;
}

SureOptions build_sure_options(const ExperimentConfig& c, std::uint64_t seed) {
  SureOptions o;
  o.primary = c.evaluation.dof;
  o.compute_exact = true;
  o.compute_fd = c.evaluation.dof == DofEstimator::finite_difference;
  o.compute_mc = c.evaluation.dof == DofEstimator::monte_carlo;
  o.probes = c.evaluation.probes;
  o.probe_dist = c.evaluation.probe_dist;
  o.seed = seed;
  return o;
}

}  // namespace sunroll
