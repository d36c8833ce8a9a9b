#include <cmath>
#include <vector>

#include "doctest.h"
#include "dfsnet/kernels.hpp"
#include "support.hpp"

using namespace dfs;
namespace k = dfs::kernels;

namespace {

template <class T>
std::vector<T> rand_vec(std::size_t n, std::uint64_t seed) {
  const auto d = dfs::test::random_vector(n, seed);
  return std::vector<T>(d.begin(), d.end());
}

template <class T>
double tol() {
  return std::is_same_v<T, float> ? 2e-5 : 1e-12;
}

template <class T>
void check_close(const std::vector<T>& a, const std::vector<T>& b, double scale) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])) <= tol<T>() * scale);
  }
}

// Sizes straddle every vector-width remainder and the 4-row blocking.
template <class T>
void compare_tables() {
  const auto& s = k::table<T>(k::Isa::scalar);
  const auto& v = k::table<T>(k::Isa::avx2);
  for (std::size_t n : {0, 1, 3, 4, 7, 8, 9, 15, 16, 17, 33, 64, 129}) {
    const auto a = rand_vec<T>(n, 10 + n);
    const auto b = rand_vec<T>(n, 20 + n);
    const double ds = s.dot(a.data(), b.data(), n);
    const double dv = v.dot(a.data(), b.data(), n);
    CHECK(std::abs(ds - dv) <= tol<T>() * (1.0 + static_cast<double>(n)));

    auto ys = rand_vec<T>(n, 30 + n);
    auto yv = ys;
    s.axpy(T(0.37), a.data(), ys.data(), n);
    v.axpy(T(0.37), a.data(), yv.data(), n);
    check_close(ys, yv, 1.0);
  }
  for (std::size_t rows : {1, 3, 4, 5, 8, 13}) {
    for (std::size_t cols : {1, 2, 7, 8, 9, 16, 31}) {
      const std::size_t ld = cols + 3;
      const auto w = rand_vec<T>(rows * ld, rows * 100 + cols);
      const auto x = rand_vec<T>(cols, rows + 7 * cols);
      const auto xr = rand_vec<T>(rows, rows + 11 * cols);
      auto ys = rand_vec<T>(rows, 5 + rows);
      auto yv = ys;
      s.gemv(w.data(), rows, cols, ld, x.data(), ys.data());
      v.gemv(w.data(), rows, cols, ld, x.data(), yv.data());
      check_close(ys, yv, static_cast<double>(cols));
      auto zs = rand_vec<T>(cols, 9 + cols);
      auto zv = zs;
      s.gemv_t(w.data(), rows, cols, ld, xr.data(), zs.data());
      v.gemv_t(w.data(), rows, cols, ld, xr.data(), zv.data());
      check_close(zs, zv, static_cast<double>(rows));
    }
  }
  for (std::size_t nx : {1, 5, 40, 257}) {
    for (std::size_t nh : {1, 3, 8, 17, 300}) {
      const auto x = rand_vec<T>(nx, nx + nh);
      const auto h = rand_vec<T>(nh, 3 * nx + nh);
      std::vector<T> ys(nx), yv(nx);
      s.convolve(x.data(), nx, h.data(), nh, ys.data());
      v.convolve(x.data(), nx, h.data(), nh, yv.data());
      check_close(ys, yv, static_cast<double>(nh));
    }
  }
}

}  // namespace

TEST_CASE("scalar kernels match their definitions") {
  const auto& s = k::table<double>(k::Isa::scalar);
  const std::vector<double> w{1, 2, 3, 4, 5, 6};  // 2 x 3
  std::vector<double> y{10, 20};
  const std::vector<double> x{1, 0, -1};
  s.gemv(w.data(), 2, 3, 3, x.data(), y.data());
  CHECK(y == std::vector<double>{8, 18});
  std::vector<double> z{0, 0, 0};
  const std::vector<double> r{1, 1};
  s.gemv_t(w.data(), 2, 3, 3, r.data(), z.data());
  CHECK(z == std::vector<double>{5, 7, 9});
  const std::vector<double> sig{1, 2, 3, 4};
  const std::vector<double> h{1, -1};
  std::vector<double> out(4);
  s.convolve(sig.data(), 4, h.data(), 2, out.data());
  CHECK(out == std::vector<double>{1, 1, 1, 1});
  CHECK(s.dot(sig.data(), sig.data(), 4) == 30.0);
}

TEST_CASE("AVX2 kernels agree with the scalar reference") {
  if (!k::avx2_supported()) {
    MESSAGE("AVX2/FMA not available; equivalence test skipped");
    CHECK_THROWS_AS(k::select(k::Isa::avx2), std::invalid_argument);
    return;
  }
  compare_tables<double>();
  compare_tables<float>();
}

TEST_CASE("runtime selection switches the active table") {
  const auto before = k::active_isa();
  k::select(k::Isa::scalar);
  CHECK(k::active_isa() == k::Isa::scalar);
  CHECK(&k::active<double>() == &k::table<double>(k::Isa::scalar));
  if (k::avx2_supported()) {
    k::select(k::Isa::avx2);
    CHECK(&k::active<float>() == &k::table<float>(k::Isa::avx2));
  }
  k::select(before);
  CHECK(k::isa_name(k::Isa::scalar) == "scalar");
}
