#include <gtest/gtest.h>

#include <cmath>

#include "sunroll/fixed_point.hpp"
#include "sunroll/pca.hpp"
#include "sunroll/random.hpp"
#include "sunroll/verify.hpp"
#include "test_util.hpp"

using namespace sunroll;
using sunroll::test::mat;
using sunroll::test::vec;

TEST(MaskFixedPoint, HandExample) {
  const auto r = mask_fixed_point(mat({{1, 0}}), vec({2, 3}));
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.x, vec({0, 3}));
  EXPECT_EQ(r.support, (std::vector<Index>{0}));
  EXPECT_EQ(r.dof_lemma3, 1);
  EXPECT_LE(r.projector_residual, 1e-12);
  EXPECT_NEAR(r.jacobian_trace, 1.0, 1e-15);
}

TEST(MaskFixedPoint, NeverActivated) {
  const Matrix w = mat({{1, 0, 0}, {0, 1, 0}});
  const Vector y = vec({-1, -2, 5});
  const auto r = mask_fixed_point(w, y);
  EXPECT_TRUE(r.converged);
  EXPECT_TRUE(r.support.empty());
  EXPECT_EQ(r.x, y);
  EXPECT_EQ(r.dof_lemma3, 3);
  EXPECT_EQ(r.mask, Vector::Zero(2));
}

TEST(MaskFixedPoint, OrthonormalRowsGiveProjector) {
  Rng rng(3);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Matrix w = orthonormal_rows(8, 16, seed);
    const Vector y = rng.normal_vector(16);
    const auto r = mask_fixed_point(w, y);
    ASSERT_TRUE(r.converged);
    Matrix ws(static_cast<Index>(r.support.size()), 16);
    for (std::size_t i = 0; i < r.support.size(); ++i) ws.row(static_cast<Index>(i)) = w.row(r.support[i]);
    const Vector proj = y - row_space_projector(ws) * y;
    EXPECT_LE((r.x - proj).norm(), 1e-10);
    EXPECT_LE(r.projector_residual, 1e-10);
    EXPECT_NEAR(r.jacobian_trace, static_cast<double>(16 - static_cast<Index>(r.support.size())), 1e-9);
  }
}

TEST(MaskFixedPoint, NonConvergenceReported) {
  Rng rng(1);
  const Matrix w = 3.0 * rng.normal_matrix(6, 4);
  const auto r = mask_fixed_point(w, rng.normal_vector(4), FixedPointOptions{.tol = 1e-12, .max_iterations = 5});
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 5);
}

TEST(MaskFixedPoint, RejectsBadOptions) {
  EXPECT_THROW(mask_fixed_point(mat({{1, 0}}), vec({1, 1}), FixedPointOptions{.tol = 0.0}), Error);
  EXPECT_THROW(mask_fixed_point(mat({{1, 0}}), vec({1, 1, 1})), DimensionError);
}
