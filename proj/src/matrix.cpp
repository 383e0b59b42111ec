#include "ifrec/matrix.hpp"

#include <algorithm>

#include "ifrec/error.hpp"
#include "ifrec/kernels.hpp"

namespace ifrec {

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Matrix matmul(const Matrix& a, const Matrix& w) {
  if (a.cols() != w.rows()) throw InvalidArgument("matmul: inner dimensions differ");
  Matrix out(a.rows(), w.cols());
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    k.gemv_t_acc(w.data(), w.rows(), w.cols(), a.row(i).data(), out.row(i).data());
  }
  return out;
}

void matmul_tn_acc(const Matrix& a, const Matrix& g, Matrix& acc) {
  if (a.rows() != g.rows() || acc.rows() != a.cols() || acc.cols() != g.cols()) {
    throw InvalidArgument("matmul_tn_acc: shape mismatch");
  }
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    k.ger_acc(acc.data(), acc.rows(), acc.cols(), a.row(i).data(), g.row(i).data());
  }
}

void matmul_nt_acc(const Matrix& g, const Matrix& w, Matrix& acc) {
  if (g.cols() != w.cols() || acc.rows() != g.rows() || acc.cols() != w.rows()) {
    throw InvalidArgument("matmul_nt_acc: shape mismatch");
  }
  const auto& k = kernels::active();
  std::vector<double> tmp(w.rows());
  for (std::size_t i = 0; i < g.rows(); ++i) {
    k.gemv(w.data(), w.rows(), w.cols(), g.row(i).data(), tmp.data());
    k.axpy(1.0, tmp.data(), acc.row(i).data(), tmp.size());
  }
}

}  // namespace ifrec
