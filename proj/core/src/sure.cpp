#include "sunroll/sure.hpp"

#include <cmath>
#include <limits>

#include "sunroll/jacobian.hpp"
#include "sunroll/random.hpp"

namespace sunroll {

double rss(const Vector& y, const Vector& xhat) {
  require_length(xhat, y.size(), "rss: xhat");
  return (xhat - y).squaredNorm();
}

double dof_exact(const Matrix& jacobian) { return jacobian_trace(jacobian); }

double default_fd_delta(const Vector& y) {
  return 1e-6 * (1.0 + (y.size() ? y.cwiseAbs().maxCoeff() : 0.0));
}

double default_mc_delta(const Vector& y) {
  return 1e-4 * (1.0 + (y.size() ? y.cwiseAbs().maxCoeff() : 0.0));
}

namespace {

Vector checked_eval(const VectorMap& h, const Vector& y, Index expected, const std::string& what) {
  Vector out = h(y);
  require_length(out, expected, what);
  for (Index i = 0; i < out.size(); ++i) {
    if (!std::isfinite(out[i]))
      throw NumericalError(what + ": non-finite output at coordinate " + std::to_string(i));
  }
  return out;
}

}  // namespace

double dof_finite_difference(const VectorMap& h, const Vector& y, double delta) {
  if (delta <= 0.0) delta = default_fd_delta(y);
  const Vector base = checked_eval(h, y, y.size(), "dof (finite difference) at the base point");
  double sum = 0.0;
  Vector shifted = y;
  for (Index i = 0; i < y.size(); ++i) {
    shifted[i] = y[i] + delta;
    // Realized step, so linear maps are differentiated without rounding bias.
    const double step = shifted[i] - y[i];
    const Vector out = h(shifted);
    require_length(out, y.size(), "dof (finite difference)");
    if (!out.allFinite())
      throw NumericalError("dof (finite difference): non-finite output at coordinate " + std::to_string(i));
    sum += (out[i] - base[i]) / step;
    shifted[i] = y[i];
  }
  return sum;
}

std::string to_string(ProbeDistribution dist) {
  return dist == ProbeDistribution::rademacher ? "rademacher" : "gaussian";
}

ProbeDistribution parse_probe_distribution(const std::string& text) {
  if (text == "rademacher") return ProbeDistribution::rademacher;
  if (text == "gaussian") return ProbeDistribution::gaussian;
  throw InvalidArgument("unknown probe distribution '" + text + "'");
}

MonteCarloDof dof_monte_carlo(const VectorMap& h, const Vector& y, Index probes, double delta,
                              ProbeDistribution dist, std::uint64_t seed) {
  if (probes < 1) throw InvalidArgument("dof (Monte Carlo): need at least one probe");
  if (delta <= 0.0) delta = default_mc_delta(y);
  const Vector base = checked_eval(h, y, y.size(), "dof (Monte Carlo) at the base point");
  double mean = 0.0;
  double m2 = 0.0;
  Vector probe(y.size());
  for (Index k = 0; k < probes; ++k) {
    Rng rng(seed ^ static_cast<std::uint64_t>(k));
    for (Index i = 0; i < y.size(); ++i)
      probe[i] = dist == ProbeDistribution::rademacher ? rng.rademacher() : rng.normal();
    const Vector out = checked_eval(h, y + delta * probe, y.size(), "dof (Monte Carlo) probe");
    const double value = probe.dot(out - base) / delta;
    // Welford update.
    const double d = value - mean;
    mean += d / static_cast<double>(k + 1);
    m2 += d * (value - mean);
  }
  MonteCarloDof out;
  out.estimate = mean;
  out.probes = probes;
  out.std_error = probes > 1 ? std::sqrt(m2 / static_cast<double>(probes - 1) / static_cast<double>(probes)) : 0.0;
  return out;
}

double sure(double rss_value, double dof, Index n, double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("sure: sigma must be positive");
  const double var = sigma * sigma;
  return -static_cast<double>(n) * var + rss_value + 2.0 * var * dof;
}

MsePsnr mse_psnr(const Vector& xhat, const Vector& x_true) {
  require_length(xhat, x_true.size(), "mse: xhat");
  if (x_true.size() == 0) throw InvalidArgument("mse: empty vectors");
  MsePsnr out;
  out.mse = (xhat - x_true).squaredNorm() / static_cast<double>(x_true.size());
  out.psnr = out.mse == 0.0 ? std::numeric_limits<double>::infinity() : -10.0 * std::log10(out.mse);
  return out;
}

Lemma1Sides lemma1_rss_decomposition(const Matrix& jacobian, const Vector& y) {
  if (jacobian.rows() != jacobian.cols()) throw DimensionError("lemma 1: jacobian is not square");
  require_length(y, jacobian.cols(), "lemma 1: y");
  const Vector jy = jacobian * y;
  return {(jy - y).squaredNorm(), jy.squaredNorm() - 2.0 * y.dot(jy) + y.squaredNorm()};
}

std::string to_string(DofEstimator estimator) {
  switch (estimator) {
    case DofEstimator::exact: return "exact";
    case DofEstimator::finite_difference: return "fd";
    case DofEstimator::monte_carlo: return "mc";
  }
  return "unknown";
}

DofEstimator parse_dof_estimator(const std::string& text) {
  if (text == "exact") return DofEstimator::exact;
  if (text == "fd" || text == "finite-difference") return DofEstimator::finite_difference;
  if (text == "mc" || text == "monte-carlo") return DofEstimator::monte_carlo;
  throw InvalidArgument("unknown dof estimator '" + text + "'");
}

SureReport evaluate_sure(const UnrolledNetwork& net, const Vector& y, double sigma,
                         const SureOptions& options, const Vector* truth) {
  if (!net.op().is_square()) throw UnsupportedError("SURE requires a square sensing operator");
  SureReport report;
  report.n = net.stack().n();
  report.sigma = sigma;
  report.primary = options.primary;
  const ForwardResult fwd = net.forward(y, {.record = options.compute_exact || options.primary == DofEstimator::exact});
  require_finite(fwd.output, "sure: network output");
  report.rss = rss(y, fwd.output);
  report.output_norm = fwd.output.norm();
  auto h = [&net](const Vector& v) { return net(v); };
  if (options.compute_exact || options.primary == DofEstimator::exact)
    report.dof_exact = dof_exact(accumulate_jacobian(fwd.trace, net));
  if (options.compute_fd || options.primary == DofEstimator::finite_difference)
    report.dof_fd = dof_finite_difference(h, y, options.fd_delta);
  if (options.compute_mc || options.primary == DofEstimator::monte_carlo) {
    const MonteCarloDof mc = dof_monte_carlo(h, y, options.probes, options.mc_delta, options.probe_dist, options.seed);
    report.dof_mc = mc.estimate;
    report.mc_std_error = mc.std_error;
    report.mc_probes = mc.probes;
  }
  switch (options.primary) {
    case DofEstimator::exact: report.dof = *report.dof_exact; break;
    case DofEstimator::finite_difference: report.dof = *report.dof_fd; break;
    case DofEstimator::monte_carlo: report.dof = *report.dof_mc; break;
  }
  report.sure = sure(report.rss, report.dof, report.n, sigma);
  if (truth) {
    require_length(*truth, report.n, "sure: ground truth");
    report.error_sum = (fwd.output - *truth).squaredNorm();
    const MsePsnr mp = mse_psnr(fwd.output, *truth);
    report.mse = mp.mse;
    report.psnr = mp.psnr;
  }
  return report;
}

nlohmann::json to_json(const SureReport& report) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v && std::isfinite(*v) ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::json out = {
      {"n", report.n},
      {"sigma", report.sigma},
      {"rss", report.rss},
      {"dof_exact", opt(report.dof_exact)},
      {"dof_fd", opt(report.dof_fd)},
      {"dof_mc", opt(report.dof_mc)},
      {"mc_std_error", opt(report.mc_std_error)},
      {"mc_probes", report.mc_probes},
      {"dof_primary", to_string(report.primary)},
      {"dof", report.dof},
      {"sure", report.sure},
      {"error_sum", opt(report.error_sum)},
      {"mse", opt(report.mse)},
      {"psnr", report.psnr && std::isinf(*report.psnr) ? nlohmann::json("inf") : opt(report.psnr)},
      {"output_norm", report.output_norm},
      {"rss_normalization", "sum"},
      {"mse_normalization", "per-coordinate mean"},
  };
  return out;
}

}  // namespace sunroll
