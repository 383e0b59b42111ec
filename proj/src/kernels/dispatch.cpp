#include <atomic>
#include <cstdlib>
#include <string>

#include "ifrec/error.hpp"
#include "ifrec/kernels.hpp"
#include "kernels_impl.hpp"

namespace ifrec::kernels {

namespace {

constexpr KernelTable kScalar{scalar::dot, scalar::axpy, scalar::scale,
                              scalar::gemv, scalar::gemv_t_acc, scalar::ger_acc};

#if defined(IFREC_HAVE_AVX2)
constexpr KernelTable kAvx2{avx2::dot, avx2::axpy, avx2::scale,
                            avx2::gemv, avx2::gemv_t_acc, avx2::ger_acc};
#endif

bool cpu_has_avx2() {
#if defined(IFREC_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend detect() {
  if (const char* env = std::getenv("IFREC_KERNELS"); env != nullptr && std::string(env) == "scalar") {
    return Backend::Scalar;
  }
  return cpu_has_avx2() ? Backend::Avx2 : Backend::Scalar;
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{&table(detect())};
  return slot;
}

}  // namespace

bool supported(Backend backend) {
  switch (backend) {
    case Backend::Scalar:
      return true;
    case Backend::Avx2:
      return cpu_has_avx2();
  }
  return false;
}

const KernelTable& table(Backend backend) {
#if defined(IFREC_HAVE_AVX2)
  if (backend == Backend::Avx2) {
    if (!cpu_has_avx2()) throw InvalidArgument("AVX2/FMA kernels are not supported on this CPU");
    return kAvx2;
  }
#else
  if (backend == Backend::Avx2) throw InvalidArgument("AVX2 kernels were not compiled in");
#endif
  return kScalar;
}

const KernelTable& active() { return *active_slot().load(std::memory_order_relaxed); }

Backend active_backend() { return &active() == &kScalar ? Backend::Scalar : Backend::Avx2; }

void set_backend(Backend backend) { active_slot().store(&table(backend), std::memory_order_relaxed); }

std::string_view name(Backend backend) { return backend == Backend::Scalar ? "scalar" : "avx2"; }

}  // namespace ifrec::kernels
