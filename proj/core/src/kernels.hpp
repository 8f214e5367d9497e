#pragma once

#include <cstddef>

// Hot dense-algebra loops shared by the tape ops and the inference paths.
// The reduction order is fixed at compile time, so results are
// bit-reproducible run to run.

namespace psno::kernels {

#if defined(__GNUC__) || defined(__clang__)
using v4d = double __attribute__((vector_size(32)));

inline double dot(const double* a, const double* b, std::size_t n) {
  v4d acc0 = {0.0, 0.0, 0.0, 0.0};
  v4d acc1 = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    v4d a0, a1, b0, b1;
    __builtin_memcpy(&a0, a + i, sizeof(v4d));
    __builtin_memcpy(&a1, a + i + 4, sizeof(v4d));
    __builtin_memcpy(&b0, b + i, sizeof(v4d));
    __builtin_memcpy(&b1, b + i + 4, sizeof(v4d));
    acc0 += a0 * b0;
    acc1 += a1 * b1;
  }
  const v4d acc = acc0 + acc1;
  double s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const v4d va = {alpha, alpha, alpha, alpha};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    v4d x0, x1, y0, y1;
    __builtin_memcpy(&x0, x + i, sizeof(v4d));
    __builtin_memcpy(&x1, x + i + 4, sizeof(v4d));
    __builtin_memcpy(&y0, y + i, sizeof(v4d));
    __builtin_memcpy(&y1, y + i + 4, sizeof(v4d));
    y0 += va * x0;
    y1 += va * x1;
    __builtin_memcpy(y + i, &y0, sizeof(v4d));
    __builtin_memcpy(y + i + 4, &y1, sizeof(v4d));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}
#else
inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}
#endif

// y[r][o] = dot(x[r][:], w[o][:]) + b[o]; w is (out, in) row-major.
inline void affine_forward(const double* x, const double* w, const double* b, double* y,
                           std::size_t rows, std::size_t in, std::size_t out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * in;
    double* yr = y + r * out;
    for (std::size_t o = 0; o < out; ++o) {
      yr[o] = dot(xr, w + o * in, in) + (b ? b[o] : 0.0);
    }
  }
}

// dx[r][:] += sum_o g[r][o] * w[o][:]
inline void affine_backward_input(const double* g, const double* w, double* dx,
                                  std::size_t rows, std::size_t in, std::size_t out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* gr = g + r * out;
    double* dxr = dx + r * in;
    for (std::size_t o = 0; o < out; ++o) {
      if (gr[o] != 0.0) axpy(gr[o], w + o * in, dxr, in);
    }
  }
}

// dw[o][:] += sum_r g[r][o] * x[r][:];  db[o] += sum_r g[r][o]
inline void affine_backward_params(const double* g, const double* x, double* dw, double* db,
                                   std::size_t rows, std::size_t in, std::size_t out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* gr = g + r * out;
    const double* xr = x + r * in;
    for (std::size_t o = 0; o < out; ++o) {
      if (gr[o] != 0.0) axpy(gr[o], xr, dw + o * in, in);
      if (db) db[o] += gr[o];
    }
  }
}

}  // namespace psno::kernels
