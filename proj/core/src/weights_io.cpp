#include "sunroll/weights_io.hpp"

#include "binary_io.hpp"

namespace sunroll {

namespace {

constexpr std::string_view kMagic = "SUNW1";
constexpr std::uint32_t kChangingBit = 1u;
constexpr std::uint32_t kAsymmetricBit = 1u << 8;

void write_matrix(detail::ByteWriter& out, const Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) out.f64(m(i, j));
}

Matrix read_matrix(detail::ByteReader& in, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = in.f64();
  return m;
}

}  // namespace

std::string encode_weights(const ProximalStack& stack) {
  detail::ByteWriter out;
  out.raw(kMagic);
  std::uint32_t mode = 0;
  if (stack.mode() == WeightMode::changing) mode |= kChangingBit;
  if (!stack.symmetric()) mode |= kAsymmetricBit;
  out.u32(mode);
  out.u32(static_cast<std::uint32_t>(stack.iterations()));
  out.u32(static_cast<std::uint32_t>(stack.layers()));
  for (const auto& layer : stack.weight_sets().front()) {
    out.u32(static_cast<std::uint32_t>(layer.w.rows()));
    out.u32(static_cast<std::uint32_t>(layer.w.cols()));
  }
  for (const auto& set : stack.weight_sets()) {
    for (const auto& layer : set) {
      write_matrix(out, layer.w);
      if (!stack.symmetric()) write_matrix(out, layer.w_bar);
    }
  }
  return out.take();
}

ProximalStack decode_weights(const std::string& bytes) {
  detail::ByteReader in(bytes, "SUNW1");
  if (bytes.size() < kMagic.size() || in.raw(kMagic.size()) != kMagic)
    throw HeaderError("SUNW1: bad magic");
  const std::uint32_t mode = in.u32();
  if ((mode & ~(kChangingBit | kAsymmetricBit)) != 0) throw HeaderError("SUNW1: unknown mode bits");
  const std::uint32_t iterations = in.u32();
  const std::uint32_t layers = in.u32();
  if (iterations == 0 || layers == 0) throw HeaderError("SUNW1: T and K must be positive");
  if (layers > 4096 || iterations > 1u << 20) throw HeaderError("SUNW1: implausible T or K");
  std::vector<std::pair<Index, Index>> shapes;
  for (std::uint32_t k = 0; k < layers; ++k) {
    const Index rows = in.u32();
    const Index cols = in.u32();
    if (rows == 0 || cols == 0) throw HeaderError("SUNW1: empty layer shape");
    shapes.emplace_back(rows, cols);
  }
  const bool changing = (mode & kChangingBit) != 0;
  const bool symmetric = (mode & kAsymmetricBit) == 0;
  const std::size_t set_count = changing ? iterations : 1;
  std::size_t doubles = 0;
  for (const auto& [rows, cols] : shapes)
    doubles += static_cast<std::size_t>(rows * cols) * (symmetric ? 1 : 2);
  if (in.remaining() < doubles * set_count * 8) throw TruncatedError("SUNW1: truncated weight payload");
  std::vector<WeightSet> sets(set_count);
  for (auto& set : sets) {
    for (const auto& [rows, cols] : shapes) {
      ResidualLayer layer;
      layer.w = read_matrix(in, rows, cols);
      if (!symmetric) layer.w_bar = read_matrix(in, rows, cols);
      set.push_back(std::move(layer));
    }
  }
  if (in.remaining() != 0) throw FormatError("SUNW1: trailing bytes after payload");
  return ProximalStack(changing ? WeightMode::changing : WeightMode::shared, iterations, symmetric,
                       std::move(sets));
}

void save_weights(const std::string& path, const ProximalStack& stack) {
  detail::write_file_atomic(path, encode_weights(stack));
}

ProximalStack load_weights(const std::string& path) { return decode_weights(detail::read_file(path)); }

}  // namespace sunroll
