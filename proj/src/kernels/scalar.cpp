#include "kernels_impl.hpp"

namespace ifrec::kernels::scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void gemv(const double* m, std::size_t rows, std::size_t cols, const double* x, double* out) {
  for (std::size_t r = 0; r < rows; ++r) out[r] = dot(m + r * cols, x, cols);
}

void gemv_t_acc(const double* m, std::size_t rows, std::size_t cols, const double* w, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (w[r] != 0.0) axpy(w[r], m + r * cols, out, cols);
  }
}

void ger_acc(double* m, std::size_t rows, std::size_t cols, const double* w, const double* x) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (w[r] != 0.0) axpy(w[r], x, m + r * cols, cols);
  }
}

}  // namespace ifrec::kernels::scalar
