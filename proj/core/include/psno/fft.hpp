#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace psno::fft {

using cplx = std::complex<double>;

// Forward real DFT: X_k = sum_j x_j exp(-2*pi*i*j*k/n) for k = 0..n/2.
// Radix-2 when n is a power of two, Bluestein otherwise.
std::vector<cplx> rfft(std::span<const double> x);

// Inverse of rfft, normalized so irfft(rfft(x), n) == x. `modes` must hold
// n/2 + 1 entries.
std::vector<double> irfft(std::span<const cplx> modes, std::size_t n);

// First `m` modes of the forward real DFT, evaluated directly in O(n*m).
// Matches rfft(x) truncated to m entries; preferable when m << n.
void rfft_truncated(std::span<const double> x, std::size_t m, cplx* out);

// Real signal of length n synthesized from its first `m` modes, with all
// higher modes zero: the ideal low-pass reconstruction. O(n*m).
void irfft_truncated(std::span<const cplx> modes, std::size_t n, double* out);

// In-place complex FFT of arbitrary length (sign = -1 forward, +1 inverse;
// inverse is unnormalized). Exposed for tests.
void cfft(std::vector<cplx>& a, int sign);

}  // namespace psno::fft
