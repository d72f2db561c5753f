#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "sunroll/network.hpp"

namespace sunroll {

using VectorMap = std::function<Vector(const Vector&)>;

// ||xhat - y||^2 (un-normalized sum).
double rss(const Vector& y, const Vector& xhat);

// tr(J) of a mask-frozen Jacobian.
double dof_exact(const Matrix& jacobian);

// 1e-6 (1 + ||y||_inf)
double default_fd_delta(const Vector& y);
// 1e-4 (1 + ||y||_inf)
double default_mc_delta(const Vector& y);

// Coordinate forward differences: sum_i [h(y + delta e_i)_i - h(y)_i] / delta.
// delta <= 0 selects default_fd_delta(y).
double dof_finite_difference(const VectorMap& h, const Vector& y, double delta = 0.0);

enum class ProbeDistribution { rademacher, gaussian };

std::string to_string(ProbeDistribution dist);
ProbeDistribution parse_probe_distribution(const std::string& text);

struct MonteCarloDof {
  double estimate = 0.0;
  double std_error = 0.0;
  Index probes = 0;
};

// (1/K) sum_k e_k^T [h(y + delta e_k) - h(y)] / delta. Probe k draws from the
// seed (seed ^ k), so the result depends only on (seed, K, delta, dist).
// delta <= 0 selects default_mc_delta(y).
MonteCarloDof dof_monte_carlo(const VectorMap& h, const Vector& y, Index probes, double delta,
                              ProbeDistribution dist, std::uint64_t seed);

// -n sigma^2 + rss + 2 sigma^2 dof
double sure(double rss_value, double dof, Index n, double sigma);

struct MsePsnr {
  double mse = 0.0;   // per-coordinate mean
  double psnr = 0.0;  // -10 log10(mse); +inf when mse == 0
};

MsePsnr mse_psnr(const Vector& xhat, const Vector& x_true);

struct Lemma1Sides {
  double lhs = 0.0;  // ||J y - y||^2
  double rhs = 0.0;  // ||J y||^2 - 2 y^T J y + ||y||^2
};

Lemma1Sides lemma1_rss_decomposition(const Matrix& jacobian, const Vector& y);

enum class DofEstimator { exact, finite_difference, monte_carlo };

std::string to_string(DofEstimator estimator);
DofEstimator parse_dof_estimator(const std::string& text);

struct SureOptions {
  DofEstimator primary = DofEstimator::exact;
  bool compute_exact = true;
  bool compute_fd = false;
  bool compute_mc = false;
  Index probes = 64;
  ProbeDistribution probe_dist = ProbeDistribution::rademacher;
  std::uint64_t seed = 0;
  double fd_delta = 0.0;  // <= 0: default
  double mc_delta = 0.0;  // <= 0: default
};

// SURE decomposition for one input. RSS and SURE use un-normalized sums; the
// truth-based MSE is reported both as a sum (comparable with SURE) and as a
// per-coordinate mean (the PSNR convention).
struct SureReport {
  Index n = 0;
  double sigma = 0.0;
  double rss = 0.0;
  std::optional<double> dof_exact;
  std::optional<double> dof_fd;
  std::optional<double> dof_mc;
  std::optional<double> mc_std_error;
  Index mc_probes = 0;
  DofEstimator primary = DofEstimator::exact;
  double dof = 0.0;  // value of the primary estimator
  double sure = 0.0;
  std::optional<double> error_sum;  // ||h(y) - x||^2
  std::optional<double> mse;        // per-coordinate mean
  std::optional<double> psnr;
  double output_norm = 0.0;  // ||x^T||
};

SureReport evaluate_sure(const UnrolledNetwork& net, const Vector& y, double sigma,
                         const SureOptions& options, const Vector* truth = nullptr);

nlohmann::json to_json(const SureReport& report);

}  // namespace sunroll
