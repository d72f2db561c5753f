#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sunroll/linalg.hpp"

namespace sunroll {

enum class DatasetKind : std::uint8_t { subspace = 1, sparse = 2 };

std::string to_string(DatasetKind kind);

struct SubspaceParams {
  Index rank = 1;
  std::uint64_t seed = 0;
};

struct SparseParams {
  Index atoms = 1;     // dictionary columns
  Index sparsity = 1;  // nonzeros per sample
  std::uint64_t seed = 0;
};

// Unit-norm synthetic samples. Sample i depends only on (generator params,
// seed, i), so a dataset of N samples is a prefix of any larger one.
struct Dataset {
  Index n = 0;
  DatasetKind kind = DatasetKind::subspace;
  SubspaceParams subspace;
  SparseParams sparse;
  std::vector<Vector> samples;

  Index size() const { return static_cast<Index>(samples.size()); }
  bool operator==(const Dataset& other) const;
};

// Random r-dimensional orthonormal basis U; x_i = U z_i / ||U z_i||.
// `first_index` offsets the per-sample stream (for disjoint test sets drawn
// from the same manifold).
Dataset generate_subspace_data(Index n, Index r, Index count, std::uint64_t seed, Index first_index = 0);

// Random dictionary with unit-norm columns; each sample combines `sparsity`
// distinct atoms with Gaussian coefficients, then is normalized.
Dataset generate_sparse_data(Index n, Index atoms, Index sparsity, Index count, std::uint64_t seed,
                             Index first_index = 0);

// The basis the subspace generator draws for a given seed (n x r).
Matrix subspace_basis(Index n, Index r, std::uint64_t seed);

// y = x + v with v ~ N(0, sigma^2 I); the draw for index i depends only on
// (seed, i).
Vector add_noise(const Vector& x, double sigma, std::uint64_t seed, Index index);
std::vector<Vector> add_noise(const std::vector<Vector>& xs, double sigma, std::uint64_t seed);

Matrix sample_correlation(const Dataset& dataset);

// "SUND1" container with a trailing CRC32 over everything before it.
std::string encode_dataset(const Dataset& dataset);
Dataset decode_dataset(const std::string& bytes);
void save_dataset(const std::string& path, const Dataset& dataset);
Dataset load_dataset(const std::string& path);

}  // namespace sunroll
