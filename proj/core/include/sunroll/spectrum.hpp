#pragma once

#include <span>
#include <string>
#include <vector>

#include "sunroll/linalg.hpp"
#include "sunroll/sensing_operator.hpp"

namespace sunroll {

enum class SpectrumClass { lowpass, bandpass, highpass };

std::string to_string(SpectrumClass c);

struct SpectrumResult {
  Index pad = 0;
  Matrix magnitude;  // pad x pad, sum over kernels of |DFT|, index (u, v) unshifted
  double low_energy_ratio = 0.0;  // energy within radius pad/8 of DC over total
  SpectrumClass classification = SpectrumClass::bandpass;
};

// Each kernel is zero-padded to pad x pad and transformed with a direct 2-D
// DFT; magnitudes are summed. Energy is the sum of squared summed magnitudes.
// ratio > 0.5 is lowpass, ratio < 0.1 highpass, otherwise bandpass.
SpectrumResult filter_spectrum(std::span<const Matrix> kernels, Index pad);

// Rows of W reshaped onto `shape` (row-major), one kernel per row.
std::vector<Matrix> kernels_from_rows(const Matrix& w, ImageShape shape);

// Long format "ku,kv,magnitude" with signed, DC-centred frequencies.
std::string spectrum_csv(const SpectrumResult& result);

}  // namespace sunroll
