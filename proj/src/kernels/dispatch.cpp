#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "dfsnet/kernels.hpp"

namespace dfs::kernels {
namespace {

Isa detect() {
  if (const char* env = std::getenv("DFSNET_ISA")) {
    const std::string want(env);
    if (want == "scalar") return Isa::scalar;
    if (want == "avx2" && avx2_supported()) return Isa::avx2;
  }
  return avx2_supported() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

bool avx2_supported() {
#if defined(DFSNET_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok;
#else
  return false;
#endif
}

void select(Isa isa) {
  if (isa == Isa::avx2 && !avx2_supported()) {
    throw std::invalid_argument("AVX2/FMA kernels are not available on this CPU");
  }
  current().store(isa);
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

template <class T>
const Table<T>& table(Isa isa) {
  if (isa == Isa::avx2) {
    const Table<T>* t = detail::avx2_table<T>();
    if (t == nullptr || !avx2_supported()) {
      throw std::invalid_argument("AVX2/FMA kernels are not available on this CPU");
    }
    return *t;
  }
  return detail::scalar_table<T>();
}

template <class T>
const Table<T>& active() {
  if (active_isa() == Isa::avx2) return *detail::avx2_table<T>();
  return detail::scalar_table<T>();
}

template const Table<float>& table<float>(Isa);
template const Table<double>& table<double>(Isa);
template const Table<float>& active<float>();
template const Table<double>& active<double>();

}  // namespace dfs::kernels
