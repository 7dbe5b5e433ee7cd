#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace dopcc {

using cplx = std::complex<double>;

/// Inverse DFT with 1/N normalization: h[n] = (1/N) sum_k H[k] exp(+j 2 pi k n / N).
std::vector<cplx> inverse_dft(std::span<const std::complex<float>> spectrum);
std::vector<cplx> inverse_dft(std::span<const cplx> spectrum);

/// Forward DFT without normalization, the inverse of inverse_dft().
std::vector<cplx> forward_dft(std::span<const cplx> signal);

/// Index of the largest-magnitude tap (first one on ties).
std::size_t strongest_tap(std::span<const cplx> cir);

/// Cyclic shift: out[i] = in[(i + shift) mod N].
std::vector<cplx> rotate_cyclic(std::span<const cplx> in, long shift);

/// Continuous-delay CIR of a centered subcarrier grid,
/// g(nu) = (1/N) sum_k H[k] exp(+j 2 pi (k - N/2) nu / N), nu in taps.
cplx centered_cir_at(std::span<const std::complex<float>> spectrum, double nu);

}  // namespace dopcc
