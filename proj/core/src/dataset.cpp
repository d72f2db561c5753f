#include "sunroll/dataset.hpp"

#include <zlib.h>

#include <cmath>
#include <numeric>

#include "binary_io.hpp"
#include "sunroll/error.hpp"
#include "sunroll/pca.hpp"
#include "sunroll/random.hpp"

namespace sunroll {

namespace {

constexpr std::string_view kMagic = "SUND1";
constexpr std::uint64_t kBasisStream = 0x6261736973ULL;
constexpr std::uint64_t kSampleStream = 0x73616d706c65ULL;

Vector normalized(Vector v) {
  const double norm = v.norm();
  if (!(norm > 0.0)) throw NumericalError("dataset: drew a zero vector");
  return v / norm;
}

Matrix orthonormal_columns(Index n, Index r, std::uint64_t seed) {
  Rng rng(seed);
  const Matrix g = rng.normal_matrix(n, r);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(n, r);
  // Sign convention: diag(R) >= 0 so the basis is a function of g alone.
  const Matrix r_factor = qr.matrixQR().topLeftCorner(r, r).triangularView<Eigen::Upper>();
  for (Index j = 0; j < r; ++j)
    if (r_factor(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

Matrix sparse_dictionary(Index n, Index atoms, std::uint64_t seed) {
  Rng rng(seed);
  Matrix d = rng.normal_matrix(n, atoms);
  for (Index j = 0; j < atoms; ++j) d.col(j).normalize();
  return d;
}

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), static_cast<uInt>(chunk));
    pos += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::subspace: return "subspace";
    case DatasetKind::sparse: return "sparse";
  }
  return "unknown";
}

bool Dataset::operator==(const Dataset& other) const {
  if (n != other.n || kind != other.kind || samples.size() != other.samples.size()) return false;
  if (kind == DatasetKind::subspace) {
    if (subspace.rank != other.subspace.rank || subspace.seed != other.subspace.seed) return false;
  } else if (sparse.atoms != other.sparse.atoms || sparse.sparsity != other.sparse.sparsity ||
             sparse.seed != other.sparse.seed) {
    return false;
  }
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i] != other.samples[i]) return false;
  return true;
}

Matrix subspace_basis(Index n, Index r, std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("subspace data: n must be positive");
  if (r < 1 || r > n) throw InvalidArgument("subspace data: need 1 <= r <= n, got r = " + std::to_string(r));
  return orthonormal_columns(n, r, derive_seed(seed, kBasisStream));
}

Dataset generate_subspace_data(Index n, Index r, Index count, std::uint64_t seed, Index first_index) {
  if (count < 1) throw InvalidArgument("subspace data: N must be positive");
  if (first_index < 0) throw InvalidArgument("subspace data: negative first index");
  const Matrix u = subspace_basis(n, r, seed);
  Dataset out;
  out.n = n;
  out.kind = DatasetKind::subspace;
  out.subspace = {r, seed};
  out.samples.reserve(static_cast<std::size_t>(count));
  const std::uint64_t stream = derive_seed(seed, kSampleStream);
  for (Index i = 0; i < count; ++i) {
    Rng rng(derive_seed(stream, static_cast<std::uint64_t>(first_index + i)));
    out.samples.push_back(normalized(u * rng.normal_vector(r)));
  }
  return out;
}

Dataset generate_sparse_data(Index n, Index atoms, Index sparsity, Index count, std::uint64_t seed,
                             Index first_index) {
  if (n < 1) throw InvalidArgument("sparse data: n must be positive");
  if (atoms < 1) throw InvalidArgument("sparse data: need at least one atom");
  if (sparsity < 1 || sparsity > atoms)
    throw InvalidArgument("sparse data: need 1 <= k <= atoms, got k = " + std::to_string(sparsity));
  if (count < 1) throw InvalidArgument("sparse data: N must be positive");
  if (first_index < 0) throw InvalidArgument("sparse data: negative first index");
  const Matrix dict = sparse_dictionary(n, atoms, derive_seed(seed, kBasisStream));
  Dataset out;
  out.n = n;
  out.kind = DatasetKind::sparse;
  out.sparse = {atoms, sparsity, seed};
  out.samples.reserve(static_cast<std::size_t>(count));
  const std::uint64_t stream = derive_seed(seed, kSampleStream);
  std::vector<Index> order(static_cast<std::size_t>(atoms));
  for (Index i = 0; i < count; ++i) {
    Rng rng(derive_seed(stream, static_cast<std::uint64_t>(first_index + i)));
    std::iota(order.begin(), order.end(), Index{0});
    rng.shuffle(std::span<Index>(order));
    Vector x = Vector::Zero(n);
    for (Index j = 0; j < sparsity; ++j) x += rng.normal() * dict.col(order[static_cast<std::size_t>(j)]);
    out.samples.push_back(normalized(std::move(x)));
  }
  return out;
}

Vector add_noise(const Vector& x, double sigma, std::uint64_t seed, Index index) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidArgument("add_noise: sigma must be finite and >= 0");
  if (sigma == 0.0) return x;
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(index)));
  return x + sigma * rng.normal_vector(x.size());
}

std::vector<Vector> add_noise(const std::vector<Vector>& xs, double sigma, std::uint64_t seed) {
  std::vector<Vector> out;
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out.push_back(add_noise(xs[i], sigma, seed, static_cast<Index>(i)));
  return out;
}

Matrix sample_correlation(const Dataset& dataset) {
  return sample_correlation(std::span<const Vector>(dataset.samples));
}

std::string encode_dataset(const Dataset& dataset) {
  if (dataset.samples.empty()) throw InvalidArgument("save dataset: empty dataset");
  detail::ByteWriter w;
  w.raw(kMagic);
  w.u32(static_cast<std::uint32_t>(dataset.n));
  w.u32(static_cast<std::uint32_t>(dataset.samples.size()));
  w.u8(static_cast<std::uint8_t>(dataset.kind));
  if (dataset.kind == DatasetKind::subspace) {
    w.u32(static_cast<std::uint32_t>(dataset.subspace.rank));
    w.u64(dataset.subspace.seed);
  } else {
    w.u32(static_cast<std::uint32_t>(dataset.sparse.atoms));
    w.u32(static_cast<std::uint32_t>(dataset.sparse.sparsity));
    w.u64(dataset.sparse.seed);
  }
  for (const auto& x : dataset.samples) {
    require_length(x, dataset.n, "save dataset: sample");
    for (Index j = 0; j < x.size(); ++j) w.f64(x[j]);
  }
  const std::uint32_t crc = crc32_of(w.bytes());
  w.u32(crc);
  return w.take();
}

Dataset decode_dataset(const std::string& bytes) {
  if (bytes.size() < kMagic.size() || std::string_view(bytes).substr(0, kMagic.size()) != kMagic)
    throw HeaderError("dataset: bad magic (expected SUND1)");
  detail::ByteReader r(bytes, "dataset");
  r.raw(kMagic.size());
  Dataset out;
  out.n = r.u32();
  const std::uint32_t count = r.u32();
  const std::uint8_t kind = r.u8();
  if (out.n == 0 || count == 0) throw HeaderError("dataset: n and N must be positive");
  if (kind == static_cast<std::uint8_t>(DatasetKind::subspace)) {
    out.kind = DatasetKind::subspace;
    out.subspace.rank = r.u32();
    out.subspace.seed = r.u64();
  } else if (kind == static_cast<std::uint8_t>(DatasetKind::sparse)) {
    out.kind = DatasetKind::sparse;
    out.sparse.atoms = r.u32();
    out.sparse.sparsity = r.u32();
    out.sparse.seed = r.u64();
  } else {
    throw HeaderError("dataset: unknown kind " + std::to_string(kind));
  }
  const std::size_t payload = static_cast<std::size_t>(out.n) * count * sizeof(double);
  if (r.remaining() < payload + 4)
    throw TruncatedError("dataset: truncated payload (" + std::to_string(r.remaining()) + " bytes left, need " +
                         std::to_string(payload + 4) + ")");
  if (r.remaining() > payload + 4) throw FormatError("dataset: trailing bytes after checksum");
  const std::size_t body_end = r.position() + payload;
  const std::uint32_t expected = crc32_of(std::string_view(bytes).substr(0, body_end));
  out.samples.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Vector x(out.n);
    for (Index j = 0; j < out.n; ++j) x[j] = r.f64();
    out.samples.push_back(std::move(x));
  }
  const std::uint32_t stored = r.u32();
  if (stored != expected) throw ChecksumError("dataset: CRC32 mismatch");
  return out;
}

void save_dataset(const std::string& path, const Dataset& dataset) {
  detail::write_file_atomic(path, encode_dataset(dataset));
}

Dataset load_dataset(const std::string& path) { return decode_dataset(detail::read_file(path)); }

}  // namespace sunroll
