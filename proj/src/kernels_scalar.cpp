#include "driftfollow/kernels.hpp"

#include <cmath>

namespace dfw::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double* y, double alpha, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void matvec_acc_scalar(double* y, const double* a, const double* x,
                       std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    y[r] += dot_scalar(a + r * cols, x, cols);
}

void matvec_t_acc_scalar(double* x, const double* a, const double* d,
                         std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    axpy_scalar(x, d[r], a + r * cols, cols);
}

void ger_acc_scalar(double* a, const double* d, const double* x,
                    std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    axpy_scalar(a + r * cols, d[r], x, cols);
}

void vtanh_scalar(double* out, const double* in, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(in[i]);
}

void vsigmoid_scalar(double* out, const double* in, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-in[i]));
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops ops{"scalar",         dot_scalar,   axpy_scalar,
                       matvec_acc_scalar, matvec_t_acc_scalar,
                       ger_acc_scalar,    vtanh_scalar, vsigmoid_scalar};
  return ops;
}

}  // namespace dfw::kernels
