#pragma once

#include <cstddef>

namespace ifrec::kernels::scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, double* x, std::size_t n);
void gemv(const double* m, std::size_t rows, std::size_t cols, const double* x, double* out);
void gemv_t_acc(const double* m, std::size_t rows, std::size_t cols, const double* w, double* out);
void ger_acc(double* m, std::size_t rows, std::size_t cols, const double* w, const double* x);
}  // namespace ifrec::kernels::scalar

#if defined(IFREC_HAVE_AVX2)
namespace ifrec::kernels::avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, double* x, std::size_t n);
void gemv(const double* m, std::size_t rows, std::size_t cols, const double* x, double* out);
void gemv_t_acc(const double* m, std::size_t rows, std::size_t cols, const double* w, double* out);
void ger_acc(double* m, std::size_t rows, std::size_t cols, const double* w, const double* x);
}  // namespace ifrec::kernels::avx2
#endif
