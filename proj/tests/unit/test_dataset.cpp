#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "sunroll/dataset.hpp"
#include "sunroll/pca.hpp"
#include "test_util.hpp"

using namespace sunroll;
using sunroll::test::vec;

TEST(SubspaceData, UnitNormAndRank) {
  const auto data = generate_subspace_data(8, 3, 1000, 4);
  EXPECT_EQ(data.size(), 1000);
  for (const auto& x : data.samples) EXPECT_NEAR(x.norm(), 1.0, 1e-12);
  Eigen::SelfAdjointEigenSolver<Matrix> es(sample_correlation(data));
  EXPECT_EQ((es.eigenvalues().array() > 1e-10).count(), 3);
}

TEST(SubspaceData, RankOneIsPlusMinusOneVector) {
  const auto data = generate_subspace_data(5, 1, 20, 2);
  const Vector& u = data.samples[0];
  for (const auto& x : data.samples) EXPECT_NEAR(std::abs(x.dot(u)), 1.0, 1e-12);
}

TEST(SubspaceData, FullRankCovarianceApproachesIsotropic) {
  const auto data = generate_subspace_data(4, 4, 20000, 1);
  EXPECT_LT((sample_correlation(data) - Matrix::Identity(4, 4) / 4.0).cwiseAbs().maxCoeff(), 0.01);
}

TEST(SubspaceData, DeterministicAndPrefixStable) {
  const auto a = generate_subspace_data(6, 2, 50, 9);
  const auto b = generate_subspace_data(6, 2, 50, 9);
  const auto longer = generate_subspace_data(6, 2, 80, 9);
  EXPECT_TRUE(a == b);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(a.samples[i], longer.samples[i]);
  const auto offset = generate_subspace_data(6, 2, 30, 9, 50);
  for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(offset.samples[i], longer.samples[50 + i]);
}

TEST(SubspaceData, SamplesLieInBasis) {
  const Matrix u = subspace_basis(10, 3, 7);
  EXPECT_LT((u.transpose() * u - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
  for (const auto& x : generate_subspace_data(10, 3, 10, 7).samples) EXPECT_LT((x - u * (u.transpose() * x)).norm(), 1e-12);
}

TEST(SubspaceData, RejectsBadParameters) {
  EXPECT_THROW(generate_subspace_data(4, 5, 10, 0), Error);
  EXPECT_THROW(generate_subspace_data(4, 0, 10, 0), Error);
  EXPECT_THROW(generate_subspace_data(4, 2, 0, 0), Error);
}

TEST(SparseData, UnitNormAndSparsity) {
  const auto data = generate_sparse_data(12, 20, 3, 100, 5);
  for (const auto& x : data.samples) EXPECT_NEAR(x.norm(), 1.0, 1e-12);
  EXPECT_TRUE(data == generate_sparse_data(12, 20, 3, 100, 5));
  EXPECT_THROW(generate_sparse_data(12, 2, 3, 10, 0), Error);
}

TEST(Noise, ZeroSigmaAndDeterminism) {
  const Vector x = vec({0.6, 0.8});
  EXPECT_EQ(add_noise(x, 0.0, 3, 0), x);
  EXPECT_EQ(add_noise(x, 0.1, 3, 7), add_noise(x, 0.1, 3, 7));
  EXPECT_NE(add_noise(x, 0.1, 3, 7), add_noise(x, 0.1, 3, 8));
  EXPECT_THROW(add_noise(x, -1.0, 3, 0), Error);
}

TEST(Noise, VarianceConcentrates) {
  const auto data = generate_subspace_data(64, 4, 10000, 1);
  const auto noisy = add_noise(data.samples, 0.1, 2);
  double total = 0.0;
  for (std::size_t i = 0; i < noisy.size(); ++i) total += (noisy[i] - data.samples[i]).squaredNorm() / 64.0;
  const double mean = total / 10000.0;
  EXPECT_GE(mean, 0.0097);
  EXPECT_LE(mean, 0.0103);
}

TEST(Correlation, PositiveSemidefinite) {
  const auto data = generate_sparse_data(10, 15, 2, 40, 3);
  Eigen::SelfAdjointEigenSolver<Matrix> es(sample_correlation(data));
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
  Dataset empty;
  empty.n = 3;
  EXPECT_THROW(sample_correlation(empty), Error);
}

TEST(Correlation, LargeSampleSpectralDof) {
  const auto data = generate_subspace_data(16, 4, 2000, 11);
  EXPECT_EQ(pca_closed_form(data.samples, 0.05).dof_spectral, 4);
}

TEST(DatasetIo, RoundTripBitExact) {
  for (const auto& data : {generate_subspace_data(5, 2, 7, 3), generate_sparse_data(5, 8, 2, 4, 1)}) {
    EXPECT_TRUE(decode_dataset(encode_dataset(data)) == data);
  }
  const auto dir = sunroll::test::scratch_dir("dataset_io");
  const auto data = generate_subspace_data(4, 2, 3, 1);
  save_dataset((dir / "d.sund").string(), data);
  EXPECT_TRUE(load_dataset((dir / "d.sund").string()) == data);
}

TEST(DatasetIo, DistinctErrors) {
  const std::string bytes = encode_dataset(generate_subspace_data(4, 2, 3, 1));
  EXPECT_EQ(bytes.substr(0, 5), "SUND1");
  std::string magic = bytes;
  magic[1] = 'Z';
  EXPECT_THROW(decode_dataset(magic), HeaderError);
  EXPECT_THROW(decode_dataset(bytes.substr(0, bytes.size() - 5)), TruncatedError);
  std::string flipped = bytes;
  flipped[40] ^= 0x01;
  EXPECT_THROW(decode_dataset(flipped), ChecksumError);
  EXPECT_THROW(decode_dataset(bytes + std::string(1, '\0')), FormatError);
}
