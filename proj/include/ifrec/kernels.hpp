#pragma once

// Dense double-precision inner loops. Every kernel has a scalar reference
// implementation and, on x86-64, an AVX2+FMA variant selected at runtime.
// The variants agree to rounding (reassociation only); see test_kernels.

#include <cstddef>
#include <span>
#include <string_view>

namespace ifrec::kernels {

enum class Backend { Scalar, Avx2 };

struct KernelTable {
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // x *= alpha
  void (*scale)(double alpha, double* x, std::size_t n);
  // out[r] = row_r(m) . x for a row-major rows x cols matrix
  void (*gemv)(const double* m, std::size_t rows, std::size_t cols, const double* x, double* out);
  // out += sum_r w[r] * row_r(m)
  void (*gemv_t_acc)(const double* m, std::size_t rows, std::size_t cols, const double* w, double* out);
  // row_r(m) += w[r] * x for every row r (rank-1 update)
  void (*ger_acc)(double* m, std::size_t rows, std::size_t cols, const double* w, const double* x);
};

const KernelTable& table(Backend backend);
bool supported(Backend backend);

// The active backend is chosen once: AVX2 when the CPU supports AVX2 and FMA,
// unless IFREC_KERNELS=scalar is set in the environment.
Backend active_backend();
void set_backend(Backend backend);
const KernelTable& active();

std::string_view name(Backend backend);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

inline void scale(double alpha, std::span<double> x) { active().scale(alpha, x.data(), x.size()); }

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

}  // namespace ifrec::kernels
