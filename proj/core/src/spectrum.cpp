#include "sunroll/spectrum.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "csv.hpp"
#include "sunroll/error.hpp"

namespace sunroll {

namespace {

Index signed_frequency(Index k, Index pad) { return k <= pad / 2 ? k : k - pad; }

}  // namespace

std::string to_string(SpectrumClass c) {
  switch (c) {
    case SpectrumClass::lowpass: return "lowpass";
    case SpectrumClass::bandpass: return "bandpass";
    case SpectrumClass::highpass: return "highpass";
  }
  return "unknown";
}

SpectrumResult filter_spectrum(std::span<const Matrix> kernels, Index pad) {
  if (kernels.empty()) throw InvalidArgument("spectrum: empty kernel list");
  for (const auto& k : kernels) {
    if (k.size() == 0) throw InvalidArgument("spectrum: empty kernel");
    if (k.rows() > pad || k.cols() > pad)
      throw InvalidArgument("spectrum: pad " + std::to_string(pad) + " is smaller than a " + std::to_string(k.rows()) +
                            "x" + std::to_string(k.cols()) + " kernel");
  }
  // twiddle[k * a mod pad]
  std::vector<std::complex<double>> twiddle(static_cast<std::size_t>(pad));
  for (Index j = 0; j < pad; ++j)
    twiddle[static_cast<std::size_t>(j)] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(pad));

  SpectrumResult out;
  out.pad = pad;
  out.magnitude = Matrix::Zero(pad, pad);
  for (const auto& k : kernels) {
    for (Index u = 0; u < pad; ++u) {
      for (Index v = 0; v < pad; ++v) {
        std::complex<double> acc = 0.0;
        for (Index a = 0; a < k.rows(); ++a)
          for (Index b = 0; b < k.cols(); ++b) {
            if (k(a, b) == 0.0) continue;
            acc += k(a, b) * twiddle[static_cast<std::size_t>((u * a + v * b) % pad)];
          }
        out.magnitude(u, v) += std::abs(acc);
      }
    }
  }
  const double radius = static_cast<double>(pad) / 8.0;
  double low = 0.0, total = 0.0;
  for (Index u = 0; u < pad; ++u)
    for (Index v = 0; v < pad; ++v) {
      const double e = out.magnitude(u, v) * out.magnitude(u, v);
      const double fu = static_cast<double>(signed_frequency(u, pad));
      const double fv = static_cast<double>(signed_frequency(v, pad));
      total += e;
      if (std::hypot(fu, fv) <= radius) low += e;
    }
  out.low_energy_ratio = total > 0.0 ? low / total : 0.0;
  out.classification = out.low_energy_ratio > 0.5   ? SpectrumClass::lowpass
                       : out.low_energy_ratio < 0.1 ? SpectrumClass::highpass
                                                    : SpectrumClass::bandpass;
  return out;
}

std::vector<Matrix> kernels_from_rows(const Matrix& w, ImageShape shape) {
  if (w.cols() != shape.size()) throw DimensionError("spectrum: row length does not match the image shape");
  std::vector<Matrix> out;
  for (Index i = 0; i < w.rows(); ++i) {
    Matrix k(shape.rows, shape.cols);
    for (Index r = 0; r < shape.rows; ++r)
      for (Index c = 0; c < shape.cols; ++c) k(r, c) = w(i, r * shape.cols + c);
    out.push_back(std::move(k));
  }
  return out;
}

std::string spectrum_csv(const SpectrumResult& result) {
  std::string out = "ku,kv,magnitude\n";
  const Index pad = result.pad;
  const Index lo = -((pad - 1) / 2);
  const Index hi = pad / 2;
  for (Index fu = lo; fu <= hi; ++fu)
    for (Index fv = lo; fv <= hi; ++fv) {
      const Index u = (fu + pad) % pad, v = (fv + pad) % pad;
      out += std::to_string(fu) + "," + std::to_string(fv) + "," + detail::format_number(result.magnitude(u, v)) + "\n";
    }
  return out;
}

}  // namespace sunroll
