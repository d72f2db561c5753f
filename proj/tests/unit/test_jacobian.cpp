#include <gtest/gtest.h>

#include <cmath>

#include "sunroll/jacobian.hpp"
#include "sunroll/random.hpp"
#include "sunroll/sure.hpp"
#include "sunroll/verify.hpp"
#include "test_util.hpp"

using namespace sunroll;
using sunroll::test::mat;
using sunroll::test::vec;

namespace {

// Random symmetric trace with arbitrary masks, built directly.
std::vector<Mask> random_masks(Rng& rng, Index t, Index width) {
  std::vector<Mask> masks;
  for (Index i = 0; i < t; ++i) {
    Mask m(width);
    for (Index j = 0; j < width; ++j) m[j] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    masks.push_back(m);
  }
  return masks;
}

Matrix product_jacobian(const Matrix& w, std::span<const Mask> masks) {
  const Index n = w.cols();
  Matrix j = Matrix::Identity(n, n);
  for (const auto& d : masks) j = (Matrix::Identity(n, n) - w.transpose() * d.asDiagonal() * w) * j;
  return j;
}

double expansion_trace(std::span<const PathTerm> paths, Index n) {
  double total = static_cast<double>(n);
  for (const auto& p : paths) total += p.sign() * p.trace_exact;
  return total;
}

}  // namespace

TEST(AccumulateJacobian, HandExample) {
  const Matrix w = mat({{1, 0, 0, 0}, {0, 1, 0, 0}});
  const auto stack = ProximalStack(WeightMode::shared, 2, true, {WeightSet{ResidualLayer{w, {}}}});
  ForwardTrace trace;
  trace.masks = {{vec({1, 0})}, {vec({1, 1})}};
  trace.pre_proximal = {Vector::Zero(4), Vector::Zero(4)};
  trace.states = {Vector::Zero(4), Vector::Zero(4), Vector::Zero(4)};
  const Matrix j = accumulate_jacobian(trace, stack, SensingOperator::identity(4), StepParams{});
  const Matrix expect = vec({0, 0, 1, 1}).asDiagonal();
  EXPECT_LT((j - expect).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_DOUBLE_EQ(jacobian_trace(j), 2.0);
}

TEST(AccumulateJacobian, ZeroWeightsGiveIdentity) {
  const auto stack = ProximalStack::zeros(WeightMode::changing, 5, 3, {4, 2}, false);
  const UnrolledNetwork net(stack, SensingOperator::identity(5), StepParams{});
  const auto result = net.forward(Rng(1).normal_vector(5), ForwardOptions{.record = true});
  EXPECT_EQ(accumulate_jacobian(result.trace, net), Matrix::Identity(5, 5));
}

TEST(AccumulateJacobian, StaleTraceRejected) {
  const auto small = ProximalStack::zeros(WeightMode::shared, 3, 2, {2}, true);
  const auto large = ProximalStack::zeros(WeightMode::shared, 3, 3, {2}, true);
  const UnrolledNetwork net(small, SensingOperator::identity(3), StepParams{});
  const auto result = net.forward(vec({1, 2, 3}), ForwardOptions{.record = true});
  EXPECT_THROW(accumulate_jacobian(result.trace, large, SensingOperator::identity(3), StepParams{}), Error);
}

TEST(AccumulateJacobian, MatchesFiniteDifferencesAcrossSteps) {
  Rng rng(31);
  const auto blur = SensingOperator::gaussian_blur({3, 3}, 1.0, 1);
  for (StepParams step : {StepParams{0.5, StepKind::gradient}, StepParams{0.5, StepKind::least_squares},
                          StepParams{0.5, StepKind::deblur}}) {
    for (auto mode : {WeightMode::shared, WeightMode::changing}) {
      const auto stack = ProximalStack::gaussian(mode, 9, 2, {6, 6}, false, 0.3, 7);
      const UnrolledNetwork net(stack, blur, step);
      Vector y = rng.normal_vector(9);
      auto result = net.forward(y, ForwardOptions{.record = true});
      while (result.trace.min_margin() < 1e-4) {
        y = rng.normal_vector(9);
        result = net.forward(y, ForwardOptions{.record = true});
      }
      const double exact = jacobian_trace(accumulate_jacobian(result.trace, net));
      const double fd = dof_finite_difference(net, y);
      EXPECT_LE(std::abs(exact - fd), 1e-5 * (1 + std::abs(exact))) << to_string(step.kind);
    }
  }
}

TEST(JacobianTrace, Examples) {
  EXPECT_DOUBLE_EQ(jacobian_trace(Matrix::Identity(4, 4)), 4.0);
  EXPECT_DOUBLE_EQ(jacobian_trace(Matrix::Zero(3, 3)), 0.0);
  EXPECT_THROW(jacobian_trace(Matrix::Zero(2, 3)), DimensionError);
}

TEST(Incoherence, Examples) {
  EXPECT_DOUBLE_EQ(incoherence(Matrix::Identity(3, 3)).value, 0.0);
  EXPECT_NEAR(incoherence(mat({{1, 0}, {0.6, 0.8}})).value, 0.6, 1e-15);
  EXPECT_DOUBLE_EQ(incoherence(mat({{1, 0}, {1, 0}})).value, 1.0);
  const auto single = incoherence(mat({{1, 2}}));
  EXPECT_FALSE(single.defined);
  EXPECT_EQ(single.value, 0.0);
  EXPECT_TRUE(incoherence(Matrix::Identity(2, 2)).defined);
  EXPECT_THROW(incoherence(Matrix(0, 3)), Error);
}

TEST(NormMatrixB, Examples) {
  EXPECT_EQ(norm_matrix_b(Matrix::Identity(3, 3)), Vector::Ones(3));
  EXPECT_EQ(norm_matrix_b(mat({{3, 4}, {0, 0}})), vec({25, 0}));
}

TEST(PathExpansion, OrthonormalWorkedExample) {
  const Matrix w = mat({{1, 0, 0, 0}, {0, 1, 0, 0}});
  const std::vector<Mask> masks = {vec({1, 0}), vec({1, 1})};
  const auto paths = path_expansion(masks, w);
  ASSERT_EQ(paths.size(), 3u);
  EXPECT_EQ(paths[0].indices, (std::vector<Index>{1}));
  EXPECT_EQ(paths[1].indices, (std::vector<Index>{2}));
  EXPECT_EQ(paths[2].indices, (std::vector<Index>{1, 2}));
  const double p[] = {1, 2, 1};
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(paths[i].path_sparsity, p[i]);
    EXPECT_DOUBLE_EQ(paths[i].trace_exact, p[i]);
    EXPECT_DOUBLE_EQ(paths[i].lemma4_bound, 0.0);
  }
  const double rho[] = {1, 2};
  const auto s = dof_surrogate(paths, 4, incoherence(w).value, rho);
  EXPECT_DOUBLE_EQ(s.surrogate, 2.0);
  EXPECT_DOUBLE_EQ(s.epsilon, 0.0);
  EXPECT_DOUBLE_EQ(s.bound, 0.0);
  EXPECT_TRUE(s.valid);
  EXPECT_DOUBLE_EQ(expansion_trace(paths, 4), jacobian_trace(product_jacobian(w, masks)));
}

TEST(PathExpansion, ZeroMasks) {
  Rng rng(2);
  const Matrix w = rng.normal_matrix(5, 7);
  const std::vector<Mask> masks(3, Mask::Zero(5));
  const auto paths = path_expansion(masks, w);
  EXPECT_EQ(paths.size(), 7u);
  for (const auto& p : paths) {
    EXPECT_EQ(p.trace_exact, 0.0);
    EXPECT_EQ(p.path_sparsity, 0.0);
  }
  const double rho[] = {0, 0, 0};
  EXPECT_DOUBLE_EQ(dof_surrogate(paths, 7, incoherence(w).value, rho).surrogate, 7.0);
}

TEST(PathExpansion, SingleUnitRow) {
  const std::vector<Mask> masks = {vec({1})};
  const auto paths = path_expansion(masks, mat({{0.6, 0.8}}));
  ASSERT_EQ(paths.size(), 1u);
  EXPECT_NEAR(paths[0].trace_exact, 1.0, 1e-15);
  EXPECT_NEAR(paths[0].path_sparsity, 1.0, 1e-15);
}

TEST(PathExpansion, IdentityForRandomNets) {
  Rng rng(77);
  for (int trial = 0; trial < 40; ++trial) {
    const Index n = 4 + static_cast<Index>(rng.below(12));
    const Index l = 2 + static_cast<Index>(rng.below(8));
    const Index t = 1 + static_cast<Index>(rng.below(8));
    const Matrix w = 0.5 * rng.normal_matrix(l, n);
    const auto masks = random_masks(rng, t, l);
    const auto paths = path_expansion(masks, w);
    EXPECT_EQ(paths.size(), (std::size_t{1} << t) - 1);
    EXPECT_LE(std::abs(expansion_trace(paths, n) - jacobian_trace(product_jacobian(w, masks))),
              1e-9 * static_cast<double>(n));
  }
}

TEST(PathExpansion, OrthonormalExactness) {
  Rng rng(5);
  const Matrix w = orthonormal_rows(8, 16, 3);
  for (Index t = 1; t <= 8; ++t) {
    const auto masks = random_masks(rng, t, 8);
    const auto paths = path_expansion(masks, w);
    for (const auto& p : paths) EXPECT_LE(lemma4_deviation(p).deviation, 1e-12);
    std::vector<double> rho;
    for (const auto& m : masks) rho.push_back(m.sum());
    const auto s = dof_surrogate(paths, 16, incoherence(w).value, rho);
    EXPECT_LE(std::abs(s.surrogate - jacobian_trace(product_jacobian(w, masks))), 1e-9 * 16);
  }
}

TEST(PathExpansion, CapAndArchitectureChecks) {
  const std::vector<Mask> masks(15, vec({1}));
  EXPECT_THROW(path_expansion(masks, mat({{1}})), UnsupportedError);
  EXPECT_NO_THROW(path_expansion(std::span<const Mask>(masks).first(3), mat({{1}}), 3));
  EXPECT_THROW(path_expansion(std::span<const Mask>(masks).first(4), mat({{1}}), 3), UnsupportedError);
  const auto deep = ProximalStack::zeros(WeightMode::shared, 3, 2, {2, 2}, true);
  const UnrolledNetwork net(deep, SensingOperator::identity(3), StepParams{});
  const auto result = net.forward(vec({1, 2, 3}), ForwardOptions{.record = true});
  EXPECT_THROW(path_expansion(result.trace, deep), UnsupportedError);
  EXPECT_FALSE(path_expansion_applicable(net));
}

TEST(Lemma4Deviation, Examples) {
  PathTerm orth;
  orth.trace_exact = 2.0;
  orth.path_sparsity = 2.0;
  EXPECT_TRUE(lemma4_deviation(orth).satisfied);
  // Single active neuron on every hop: off-diagonal terms cannot enter.
  const Matrix w = mat({{1, 0, 0}, {0.5, 0.5, 0.5}});
  const std::vector<Mask> masks = {vec({0, 1}), vec({0, 1})};
  for (const auto& p : path_expansion(masks, w)) {
    const auto check = lemma4_deviation(p);
    EXPECT_EQ(check.bound, 0.0);
    EXPECT_LE(check.deviation, 1e-15);
    EXPECT_TRUE(check.satisfied);
  }
  PathTerm broken;
  broken.trace_exact = 1.0;
  broken.path_sparsity = 0.0;
  broken.lemma4_bound = 0.5;
  EXPECT_FALSE(lemma4_deviation(broken).satisfied);
}

TEST(Theorem1Bound, ValuesAndMonotonicity) {
  for (Index t = 1; t <= 12; ++t) EXPECT_EQ(theorem1_bound(0.0, t), 0.0);
  EXPECT_NEAR(theorem1_bound(0.5, 2), 0.25, 1e-15);
  EXPECT_NEAR(theorem1_bound(0.1, 3), std::pow(1.1, 3) - 1 - 0.3, 1e-15);
  double prev = 0;
  for (double eps = 0; eps <= 2; eps += 0.05) {
    const double b = theorem1_bound(eps, 5);
    EXPECT_GE(b, prev);
    prev = b;
  }
  for (double eps : {0.01, 0.3, 1.5}) {
    for (Index t = 1; t < 12; ++t) EXPECT_LE(theorem1_bound(eps, t), theorem1_bound(eps, t + 1));
  }
  EXPECT_THROW(theorem1_bound(-0.1, 2), Error);
}

TEST(DofSurrogate, EmptyPathsRejected) {
  EXPECT_THROW(dof_surrogate({}, 3, 0.0, {}), Error);
}

TEST(AnalyzeJacobian, ReportAgreesWithTrace) {
  const Matrix w = orthonormal_rows(4, 8, 1);
  const auto stack = ProximalStack(WeightMode::shared, 3, true, {WeightSet{ResidualLayer{w, {}}}});
  const UnrolledNetwork net(stack, SensingOperator::identity(8), StepParams{});
  ASSERT_TRUE(path_expansion_applicable(net));
  const auto report = analyze_jacobian(net, Rng(4).normal_vector(8));
  EXPECT_EQ(report.paths.size(), 7u);
  EXPECT_NEAR(report.surrogate, report.trace, 1e-9 * 8);
  EXPECT_EQ(report.bound, 0.0);
  const auto json = to_json(report);
  EXPECT_EQ(json.at("n"), 8);
  EXPECT_EQ(json.at("T"), 3);
  EXPECT_EQ(json.at("paths").size(), 7u);
  for (const char* key : {"trace", "mu_w", "rho", "epsilon", "surrogate", "bound"}) EXPECT_TRUE(json.contains(key));
}

TEST(AnalyzeJacobian, ExpectedRequiresApplicableNet) {
  const auto stack = ProximalStack::zeros(WeightMode::changing, 4, 2, {3}, true);
  const UnrolledNetwork net(stack, SensingOperator::identity(4), StepParams{});
  const std::vector<Vector> inputs = {Vector::Ones(4)};
  EXPECT_THROW(analyze_jacobian_expected(net, inputs), UnsupportedError);
}
