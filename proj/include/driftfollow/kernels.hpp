#pragma once

#include <cstddef>
#include <string_view>

namespace dfw::kernels {

// Double-precision inner-loop kernels. One table per backend; the active
// backend is chosen once at startup (AVX2+FMA when the CPU has it, scalar
// otherwise). DRIFTFOLLOW_KERNELS=scalar forces the reference path.
struct Ops {
  const char* name;

  // sum_i a[i]*b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double* y, double alpha, const double* x, std::size_t n);
  // y[r] += sum_c A[r*cols + c] * x[c], A row-major rows x cols
  void (*matvec_acc)(double* y, const double* a, const double* x,
                     std::size_t rows, std::size_t cols);
  // x[c] += sum_r A[r*cols + c] * d[r]  (A^T d, accumulated)
  void (*matvec_t_acc)(double* x, const double* a, const double* d,
                       std::size_t rows, std::size_t cols);
  // A[r*cols + c] += d[r] * x[c]  (rank-1 update)
  void (*ger_acc)(double* a, const double* d, const double* x,
                  std::size_t rows, std::size_t cols);
  void (*vtanh)(double* out, const double* in, std::size_t n);
  void (*vsigmoid)(double* out, const double* in, std::size_t n);
};

const Ops& scalar_ops();

// nullptr when the binary was built without AVX2 or the CPU lacks it.
const Ops* avx2_ops();

// Backend used by all hot loops. Stable for the lifetime of the process.
const Ops& active();

}  // namespace dfw::kernels
