#pragma once

#include <vector>

#include "isac/geometry.hpp"

namespace isac {

/// Unnormalized DFT: X[q] = sum_n x[n] exp(-j 2 pi q n / N). Any length.
/// Thread-safe; plans are cached per size behind a mutex, execution is lock-free.
void fft_forward(const Complex* in, Complex* out, std::size_t n);

/// Unnormalized inverse DFT: x[n] = sum_q X[q] exp(+j 2 pi q n / N) (no 1/N).
void fft_inverse(const Complex* in, Complex* out, std::size_t n);

std::vector<Complex> fft_forward(const std::vector<Complex>& in);
std::vector<Complex> fft_inverse(const std::vector<Complex>& in);

}  // namespace isac
