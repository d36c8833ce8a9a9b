#include "dfsnet/kernels.hpp"

namespace dfs::kernels::detail {
namespace {

template <class T>
T dot_scalar(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <class T>
void axpy_scalar(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void gemv_scalar(const T* w, std::size_t rows, std::size_t cols, std::size_t ld, const T* x, T* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] += dot_scalar(w + r * ld, x, cols);
}

template <class T>
void gemv_t_scalar(const T* w, std::size_t rows, std::size_t cols, std::size_t ld, const T* x, T* y) {
  for (std::size_t r = 0; r < rows; ++r) axpy_scalar(x[r], w + r * ld, y, cols);
}

template <class T>
void convolve_scalar(const T* x, std::size_t nx, const T* h, std::size_t nh, T* y) {
  for (std::size_t t = 0; t < nx; ++t) {
    const std::size_t kmax = t + 1 < nh ? t + 1 : nh;
    T acc = 0;
    for (std::size_t k = 0; k < kmax; ++k) acc += h[k] * x[t - k];
    y[t] = acc;
  }
}

template <class T>
constexpr Table<T> make_table() {
  return {Isa::scalar, &dot_scalar<T>, &axpy_scalar<T>, &gemv_scalar<T>, &gemv_t_scalar<T>,
          &convolve_scalar<T>};
}

constexpr Table<float> kScalarF = make_table<float>();
constexpr Table<double> kScalarD = make_table<double>();

}  // namespace

template <>
const Table<float>& scalar_table<float>() {
  return kScalarF;
}
template <>
const Table<double>& scalar_table<double>() {
  return kScalarD;
}

}  // namespace dfs::kernels::detail
