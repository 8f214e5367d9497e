#include "psno/fft.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <numbers>
#include <unordered_map>

#include "psno/errors.hpp"

#include "kernels.hpp"

namespace psno::fft {

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Exact-twiddle table e^{-2*pi*i*j/n} for j < n/2, cached per length.
const std::vector<cplx>& twiddle_table(std::size_t n) {
  static std::mutex mutex;
  static std::unordered_map<std::size_t, std::vector<cplx>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<cplx> table(n / 2);
  for (std::size_t j = 0; j < n / 2; ++j) {
    const double ang = -kTau * static_cast<double>(j) / static_cast<double>(n);
    table[j] = cplx(std::cos(ang), std::sin(ang));
  }
  return cache.emplace(n, std::move(table)).first->second;
}

// Iterative radix-2 Cooley-Tukey; n must be a power of two. Twiddles come
// from a precomputed table, so no rotation drift accumulates.
void fft_pow2(cplx* a, std::size_t n, int sign) {
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const std::vector<cplx>& table = twiddle_table(n);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t stride = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t j = 0; j < len / 2; ++j) {
        const cplx tw = table[j * stride];
        const cplx w = sign < 0 ? tw : std::conj(tw);
        const cplx u = a[i + j];
        const cplx v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
      }
    }
  }
}

// Cached chirp tables for Bluestein transforms of a given length.
struct BluesteinPlan {
  std::size_t n = 0, m = 0;      // signal length, padded power-of-two length
  std::vector<cplx> chirp;        // w_j = exp(-i*pi*j^2/n)
  std::vector<cplx> kernel_fft;   // FFT of the conjugate-chirp convolution kernel
};

const BluesteinPlan& bluestein_plan(std::size_t n) {
  static std::mutex mutex;
  static std::unordered_map<std::size_t, BluesteinPlan> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  BluesteinPlan plan;
  plan.n = n;
  plan.m = next_pow2(2 * n - 1);
  plan.chirp.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    // j^2 mod 2n keeps the chirp argument small and exact in 64-bit.
    const std::uint64_t q = (static_cast<std::uint64_t>(j) * j) % (2 * n);
    const double ang = -std::numbers::pi * static_cast<double>(q) / static_cast<double>(n);
    plan.chirp[j] = cplx(std::cos(ang), std::sin(ang));
  }
  plan.kernel_fft.assign(plan.m, cplx(0.0, 0.0));
  plan.kernel_fft[0] = cplx(1.0, 0.0);
  for (std::size_t j = 1; j < n; ++j) {
    const cplx b = std::conj(plan.chirp[j]);
    plan.kernel_fft[j] = b;
    plan.kernel_fft[plan.m - j] = b;
  }
  fft_pow2(plan.kernel_fft.data(), plan.m, -1);
  return cache.emplace(n, std::move(plan)).first->second;
}

void fft_bluestein(cplx* a, std::size_t n, int sign) {
  const BluesteinPlan& plan = bluestein_plan(n);
  std::vector<cplx> work(plan.m, cplx(0.0, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    const cplx w = sign < 0 ? plan.chirp[j] : std::conj(plan.chirp[j]);
    work[j] = a[j] * w;
  }
  fft_pow2(work.data(), plan.m, -1);
  if (sign < 0) {
    for (std::size_t j = 0; j < plan.m; ++j) work[j] *= plan.kernel_fft[j];
  } else {
    // Inverse transform uses the conjugate kernel.
    for (std::size_t j = 0; j < plan.m; ++j) work[j] *= std::conj(plan.kernel_fft[j]);
  }
  fft_pow2(work.data(), plan.m, 1);
  const double inv_m = 1.0 / static_cast<double>(plan.m);
  for (std::size_t j = 0; j < n; ++j) {
    const cplx w = sign < 0 ? plan.chirp[j] : std::conj(plan.chirp[j]);
    a[j] = work[j] * inv_m * w;
  }
}

}  // namespace

void cfft(std::vector<cplx>& a, int sign) {
  if (a.size() <= 1) return;
  if (is_pow2(a.size())) {
    fft_pow2(a.data(), a.size(), sign);
  } else {
    fft_bluestein(a.data(), a.size(), sign);
  }
}

std::vector<cplx> rfft(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 2) throw ConfigError("rfft requires a signal of length >= 2");
  std::vector<cplx> a(n);
  for (std::size_t j = 0; j < n; ++j) a[j] = cplx(x[j], 0.0);
  cfft(a, -1);
  a.resize(n / 2 + 1);
  return a;
}

std::vector<double> irfft(std::span<const cplx> modes, std::size_t n) {
  if (n < 2) throw ConfigError("irfft requires n >= 2");
  if (modes.size() != n / 2 + 1) throw ConfigError("irfft mode count must be n/2 + 1");
  std::vector<cplx> a(n);
  for (std::size_t k = 0; k < modes.size(); ++k) a[k] = modes[k];
  for (std::size_t k = modes.size(); k < n; ++k) a[k] = std::conj(a[n - k]);
  cfft(a, 1);
  std::vector<double> out(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < n; ++j) out[j] = a[j].real() * inv_n;
  return out;
}

namespace {

// Cos/sin basis rows for the first m modes of a length-n DFT; lets the
// truncated transforms run as plain dot products / axpys.
struct ModeTable {
  std::vector<double> cos_rows;  // (m, n)
  std::vector<double> sin_rows;  // (m, n)
};

const ModeTable& mode_table(std::size_t n, std::size_t m) {
  static std::mutex mutex;
  static std::unordered_map<std::uint64_t, ModeTable> cache;
  const std::uint64_t key = (static_cast<std::uint64_t>(n) << 20) | m;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  ModeTable table;
  table.cos_rows.resize(m * n);
  table.sin_rows.resize(m * n);
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::uint64_t q = (static_cast<std::uint64_t>(j) * k) % n;
      const double ang = kTau * static_cast<double>(q) / static_cast<double>(n);
      table.cos_rows[k * n + j] = std::cos(ang);
      table.sin_rows[k * n + j] = std::sin(ang);
    }
  }
  return cache.emplace(key, std::move(table)).first->second;
}

}  // namespace

void rfft_truncated(std::span<const double> x, std::size_t m, cplx* out) {
  const std::size_t n = x.size();
  const std::size_t avail = n / 2 + 1;
  if (m > avail) throw ConfigError("rfft_truncated: more modes than available");
  if (n >= (1u << 20)) throw ConfigError("rfft_truncated: signal too long for the mode table");
  const ModeTable& table = mode_table(n, m);
  for (std::size_t k = 0; k < m; ++k) {
    out[k] = cplx(kernels::dot(x.data(), table.cos_rows.data() + k * n, n),
                  -kernels::dot(x.data(), table.sin_rows.data() + k * n, n));
  }
}

void irfft_truncated(std::span<const cplx> modes, std::size_t n, double* out) {
  const std::size_t avail = n / 2 + 1;
  const std::size_t m = modes.size();
  if (m > avail) throw ConfigError("irfft_truncated: more modes than available");
  if (n >= (1u << 20)) throw ConfigError("irfft_truncated: signal too long for the mode table");
  const double inv_n = 1.0 / static_cast<double>(n);
  std::fill(out, out + n, modes.empty() ? 0.0 : modes[0].real() * inv_n);
  if (m < 2) return;
  const ModeTable& table = mode_table(n, m);
  for (std::size_t k = 1; k < m; ++k) {
    // Interior modes appear twice via conjugate symmetry; an even-length
    // Nyquist mode appears once.
    const double weight = ((n % 2 == 0) && k == avail - 1) ? inv_n : 2.0 * inv_n;
    kernels::axpy(weight * modes[k].real(), table.cos_rows.data() + k * n, out, n);
    kernels::axpy(-weight * modes[k].imag(), table.sin_rows.data() + k * n, out, n);
  }
}

}  // namespace psno::fft
