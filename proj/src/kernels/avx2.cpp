// Compiled with -mavx2 -mfma. Only reached after a CPUID check.

#include "dfsnet/kernels.hpp"

#if defined(DFSNET_HAVE_AVX2)
#include <immintrin.h>

namespace dfs::kernels::detail {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d high64 = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
}

float dot_f(const float* a, const float* b, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  }
  float acc = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double dot_d(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_f(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpy_d(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// Four rows at a time so each load of x feeds four accumulators.
template <class T, class Dot>
void gemv_rows(const T* w, std::size_t rows, std::size_t cols, std::size_t ld, const T* x, T* y,
               Dot dot) {
  for (std::size_t r = 0; r < rows; ++r) y[r] += dot(w + r * ld, x, cols);
}

void gemv_f(const float* w, std::size_t rows, std::size_t cols, std::size_t ld, const float* x,
            float* y) {
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) {
    const float* w0 = w + r * ld;
    const float* w1 = w0 + ld;
    const float* w2 = w1 + ld;
    const float* w3 = w2 + ld;
    __m256 a0 = _mm256_setzero_ps(), a1 = _mm256_setzero_ps();
    __m256 a2 = _mm256_setzero_ps(), a3 = _mm256_setzero_ps();
    std::size_t c = 0;
    for (; c + 8 <= cols; c += 8) {
      const __m256 vx = _mm256_loadu_ps(x + c);
      a0 = _mm256_fmadd_ps(_mm256_loadu_ps(w0 + c), vx, a0);
      a1 = _mm256_fmadd_ps(_mm256_loadu_ps(w1 + c), vx, a1);
      a2 = _mm256_fmadd_ps(_mm256_loadu_ps(w2 + c), vx, a2);
      a3 = _mm256_fmadd_ps(_mm256_loadu_ps(w3 + c), vx, a3);
    }
    float s0 = hsum(a0), s1 = hsum(a1), s2 = hsum(a2), s3 = hsum(a3);
    for (; c < cols; ++c) {
      s0 += w0[c] * x[c];
      s1 += w1[c] * x[c];
      s2 += w2[c] * x[c];
      s3 += w3[c] * x[c];
    }
    y[r] += s0;
    y[r + 1] += s1;
    y[r + 2] += s2;
    y[r + 3] += s3;
  }
  gemv_rows(w + r * ld, rows - r, cols, ld, x, y + r, dot_f);
}

void gemv_d(const double* w, std::size_t rows, std::size_t cols, std::size_t ld, const double* x,
            double* y) {
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) {
    const double* w0 = w + r * ld;
    const double* w1 = w0 + ld;
    const double* w2 = w1 + ld;
    const double* w3 = w2 + ld;
    __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
    __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
    std::size_t c = 0;
    for (; c + 4 <= cols; c += 4) {
      const __m256d vx = _mm256_loadu_pd(x + c);
      a0 = _mm256_fmadd_pd(_mm256_loadu_pd(w0 + c), vx, a0);
      a1 = _mm256_fmadd_pd(_mm256_loadu_pd(w1 + c), vx, a1);
      a2 = _mm256_fmadd_pd(_mm256_loadu_pd(w2 + c), vx, a2);
      a3 = _mm256_fmadd_pd(_mm256_loadu_pd(w3 + c), vx, a3);
    }
    double s0 = hsum(a0), s1 = hsum(a1), s2 = hsum(a2), s3 = hsum(a3);
    for (; c < cols; ++c) {
      s0 += w0[c] * x[c];
      s1 += w1[c] * x[c];
      s2 += w2[c] * x[c];
      s3 += w3[c] * x[c];
    }
    y[r] += s0;
    y[r + 1] += s1;
    y[r + 2] += s2;
    y[r + 3] += s3;
  }
  gemv_rows(w + r * ld, rows - r, cols, ld, x, y + r, dot_d);
}

template <class T, void (*Axpy)(T, const T*, T*, std::size_t)>
void gemv_t_avx(const T* w, std::size_t rows, std::size_t cols, std::size_t ld, const T* x, T* y) {
  for (std::size_t r = 0; r < rows; ++r) Axpy(x[r], w + r * ld, y, cols);
}

// Scatter form: y[k:] += h[k] * x for each tap, vectorized along time.
template <class T, void (*Axpy)(T, const T*, T*, std::size_t)>
void convolve_avx(const T* x, std::size_t nx, const T* h, std::size_t nh, T* y) {
  for (std::size_t t = 0; t < nx; ++t) y[t] = 0;
  for (std::size_t k = 0; k < nh && k < nx; ++k) {
    if (h[k] != T(0)) Axpy(h[k], x, y + k, nx - k);
  }
}

const Table<float> kAvx2F{Isa::avx2, &dot_f, &axpy_f, &gemv_f, &gemv_t_avx<float, axpy_f>,
                          &convolve_avx<float, axpy_f>};
const Table<double> kAvx2D{Isa::avx2, &dot_d, &axpy_d, &gemv_d, &gemv_t_avx<double, axpy_d>,
                           &convolve_avx<double, axpy_d>};

}  // namespace

template <>
const Table<float>* avx2_table<float>() {
  return &kAvx2F;
}
template <>
const Table<double>* avx2_table<double>() {
  return &kAvx2D;
}

}  // namespace dfs::kernels::detail

#else

namespace dfs::kernels::detail {
template <>
const Table<float>* avx2_table<float>() {
  return nullptr;
}
template <>
const Table<double>* avx2_table<double>() {
  return nullptr;
}
}  // namespace dfs::kernels::detail

#endif
