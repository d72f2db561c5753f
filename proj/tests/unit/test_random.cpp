#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "sunroll/random.hpp"

using namespace sunroll;

TEST(Rng, SameSeedSameStream) {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.normal(), b.normal());
  EXPECT_EQ(Rng(1).normal_matrix(3, 3), Rng(1).normal_matrix(3, 3));
  EXPECT_NE(Rng(1).next_u64(), Rng(2).next_u64());
}

TEST(Rng, UniformRangeAndMoments) {
  Rng rng(7);
  double sum = 0, sq = 0;
  const int count = 200000;
  for (int i = 0; i < count; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / count, 0.0, 0.01);
  EXPECT_NEAR(sq / count, 1.0, 0.01);
}

TEST(Rng, BelowAndShuffle) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(rng.below(7), 7u);
  std::vector<int> items = {0, 1, 2, 3, 4, 5};
  rng.shuffle(std::span<int>(items));
  EXPECT_EQ(std::set<int>(items.begin(), items.end()).size(), 6u);
}

TEST(Seeds, DeriveSeedSeparatesStreams) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 10; ++s)
    for (std::uint64_t k = 0; k < 10; ++k) seen.insert(derive_seed(s, k));
  EXPECT_EQ(seen.size(), 100u);
  EXPECT_EQ(derive_seed(4, 2), derive_seed(4, 2));
  EXPECT_NE(mix_seed(0), 0u);
}
