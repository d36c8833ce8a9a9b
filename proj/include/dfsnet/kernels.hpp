#pragma once

// Dense inner-loop kernels with a portable scalar reference and an AVX2/FMA
// variant. The variant is chosen once at startup from CPUID and can be forced
// with DFSNET_ISA=scalar|avx2 or select(). Every caller in a process goes
// through the same table, so two code paths that issue the same kernel calls
// in the same order produce bit-identical results.

#include <cstddef>
#include <string_view>

namespace dfs::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

template <class T>
struct Table {
  Isa isa;
  // sum_i a[i] * b[i]
  T (*dot)(const T* a, const T* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
  // y[r] += sum_c w[r * ld + c] * x[c], r < rows, c < cols
  void (*gemv)(const T* w, std::size_t rows, std::size_t cols, std::size_t ld, const T* x, T* y);
  // y[c] += sum_r x[r] * w[r * ld + c]  (row vector times matrix)
  void (*gemv_t)(const T* w, std::size_t rows, std::size_t cols, std::size_t ld, const T* x, T* y);
  // y[t] = sum_k h[k] * x[t - k], t < nx; x is zero outside [0, nx)
  void (*convolve)(const T* x, std::size_t nx, const T* h, std::size_t nh, T* y);
};

bool avx2_supported();

// Throws std::invalid_argument when the requested ISA is not available.
void select(Isa isa);
Isa active_isa();

template <class T>
const Table<T>& table(Isa isa);

template <class T>
const Table<T>& active();

template <class T>
inline T dot(const T* a, const T* b, std::size_t n) {
  return active<T>().dot(a, b, n);
}
template <class T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
  active<T>().axpy(alpha, x, y, n);
}
template <class T>
inline void gemv(const T* w, std::size_t rows, std::size_t cols, std::size_t ld, const T* x, T* y) {
  active<T>().gemv(w, rows, cols, ld, x, y);
}
template <class T>
inline void gemv_t(const T* w, std::size_t rows, std::size_t cols, std::size_t ld, const T* x, T* y) {
  active<T>().gemv_t(w, rows, cols, ld, x, y);
}
template <class T>
inline void convolve(const T* x, std::size_t nx, const T* h, std::size_t nh, T* y) {
  active<T>().convolve(x, nx, h, nh, y);
}

namespace detail {
template <class T>
const Table<T>& scalar_table();
template <class T>
const Table<T>* avx2_table();  // nullptr when not compiled in
}  // namespace detail

}  // namespace dfs::kernels
