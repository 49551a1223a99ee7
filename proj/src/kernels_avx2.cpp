#include "driftfollow/kernels.hpp"

#include <cmath>
#include <immintrin.h>

namespace dfw::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4)
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_avx2(double* y, double alpha, const double* x, std::size_t n) {
  __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void matvec_acc_avx2(double* y, const double* a, const double* x,
                     std::size_t rows, std::size_t cols) {
  std::size_t r = 0;
  // two rows at a time keeps both FMA ports busy on short rows
  for (; r + 2 <= rows; r += 2) {
    const double* a0 = a + r * cols;
    const double* a1 = a0 + cols;
    __m256d s0 = _mm256_setzero_pd();
    __m256d s1 = _mm256_setzero_pd();
    std::size_t c = 0;
    for (; c + 4 <= cols; c += 4) {
      __m256d vx = _mm256_loadu_pd(x + c);
      s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a0 + c), vx, s0);
      s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a1 + c), vx, s1);
    }
    double t0 = hsum(s0), t1 = hsum(s1);
    for (; c < cols; ++c) {
      t0 += a0[c] * x[c];
      t1 += a1[c] * x[c];
    }
    y[r] += t0;
    y[r + 1] += t1;
  }
  for (; r < rows; ++r) y[r] += dot_avx2(a + r * cols, x, cols);
}

void matvec_t_acc_avx2(double* x, const double* a, const double* d,
                       std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    axpy_avx2(x, d[r], a + r * cols, cols);
}

void ger_acc_avx2(double* a, const double* d, const double* x,
                  std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    axpy_avx2(a + r * cols, d[r], x, cols);
}

// exp(x) for 4 doubles, Cephes-style P/Q rational after range reduction.
inline __m256d vexp(__m256d x) {
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
  const __m256d c1 = _mm256_set1_pd(6.93145751953125e-1);
  const __m256d c2 = _mm256_set1_pd(1.42860682030941723212e-6);
  const __m256d p0 = _mm256_set1_pd(1.26177193074810590878e-4);
  const __m256d p1 = _mm256_set1_pd(3.02994407707441961300e-2);
  const __m256d p2 = _mm256_set1_pd(9.99999999999999999910e-1);
  const __m256d q0 = _mm256_set1_pd(3.00198505138664455042e-6);
  const __m256d q1 = _mm256_set1_pd(2.52448340349684104192e-3);
  const __m256d q2 = _mm256_set1_pd(2.27265548208155028766e-1);
  const __m256d q3 = _mm256_set1_pd(2.00000000000000000005e0);
  const __m256d max_x = _mm256_set1_pd(708.0);
  const __m256d min_x = _mm256_set1_pd(-708.0);

  x = _mm256_min_pd(_mm256_max_pd(x, min_x), max_x);

  __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e),
                              _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  x = _mm256_fnmadd_pd(n, c1, x);
  x = _mm256_fnmadd_pd(n, c2, x);

  __m256d xx = _mm256_mul_pd(x, x);
  __m256d px = _mm256_fmadd_pd(p0, xx, p1);
  px = _mm256_fmadd_pd(px, xx, p2);
  px = _mm256_mul_pd(px, x);
  __m256d qx = _mm256_fmadd_pd(q0, xx, q1);
  qx = _mm256_fmadd_pd(qx, xx, q2);
  qx = _mm256_fmadd_pd(qx, xx, q3);
  __m256d e = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
  e = _mm256_fmadd_pd(e, _mm256_set1_pd(2.0), _mm256_set1_pd(1.0));

  // scale by 2^n through the exponent field
  __m128i ni = _mm256_cvtpd_epi32(n);
  __m256i nl = _mm256_cvtepi32_epi64(ni);
  nl = _mm256_add_epi64(nl, _mm256_set1_epi64x(1023));
  nl = _mm256_slli_epi64(nl, 52);
  return _mm256_mul_pd(e, _mm256_castsi256_pd(nl));
}

inline __m256d vtanh1(__m256d x) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  __m256d sign = _mm256_and_pd(x, sign_mask);
  __m256d ax = _mm256_andnot_pd(sign_mask, x);
  // tanh(|x|) = (1 - e^{-2|x|}) / (1 + e^{-2|x|})
  __m256d e = vexp(_mm256_mul_pd(ax, _mm256_set1_pd(-2.0)));
  __m256d one = _mm256_set1_pd(1.0);
  __m256d r = _mm256_div_pd(_mm256_sub_pd(one, e), _mm256_add_pd(one, e));
  return _mm256_or_pd(r, sign);
}

void vtanh_avx2(double* out, const double* in, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, vtanh1(_mm256_loadu_pd(in + i)));
  for (; i < n; ++i) {
    double buf[4] = {in[i], 0, 0, 0};
    __m256d r = vtanh1(_mm256_loadu_pd(buf));
    _mm256_storeu_pd(buf, r);
    out[i] = buf[0];
  }
}

void vsigmoid_avx2(double* out, const double* in, std::size_t n) {
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d x = _mm256_loadu_pd(in + i);
    __m256d e = vexp(_mm256_sub_pd(_mm256_setzero_pd(), x));
    _mm256_storeu_pd(out + i, _mm256_div_pd(one, _mm256_add_pd(one, e)));
  }
  for (; i < n; ++i) {
    double buf[4] = {in[i], 0, 0, 0};
    __m256d x = _mm256_loadu_pd(buf);
    __m256d e = vexp(_mm256_sub_pd(_mm256_setzero_pd(), x));
    _mm256_storeu_pd(buf, _mm256_div_pd(one, _mm256_add_pd(one, e)));
    out[i] = buf[0];
  }
}

}  // namespace

const Ops* avx2_ops_impl() {
  static const Ops ops{"avx2",          dot_avx2,   axpy_avx2,
                       matvec_acc_avx2, matvec_t_acc_avx2,
                       ger_acc_avx2,    vtanh_avx2, vsigmoid_avx2};
  return &ops;
}

}  // namespace dfw::kernels
