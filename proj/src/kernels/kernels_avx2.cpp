// Compiled with -mavx2 -mfma. Nothing here may run before dispatch.cpp has
// checked the CPU feature bits, so the table is constant-initialized data.

#include "kernels_impl.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

namespace causalgap::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double weighted_dot_avx2(const double* w, const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d wa0 = _mm256_mul_pd(_mm256_loadu_pd(w + i), _mm256_loadu_pd(a + i));
    const __m256d wa1 = _mm256_mul_pd(_mm256_loadu_pd(w + i + 4), _mm256_loadu_pd(a + i + 4));
    acc0 = _mm256_fmadd_pd(wa0, _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(wa1, _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    const __m256d wa = _mm256_mul_pd(_mm256_loadu_pd(w + i), _mm256_loadu_pd(a + i));
    acc0 = _mm256_fmadd_pd(wa, _mm256_loadu_pd(b + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += w[i] * a[i] * b[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void multiply_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

Moments weighted_moments_avx2(const double* w, const double* x, std::size_t n) {
  __m256d sw = _mm256_setzero_pd();
  __m256d swx = _mm256_setzero_pd();
  __m256d swxx = _mm256_setzero_pd();
  std::size_t i = 0;
  if (w) {
    for (; i + 4 <= n; i += 4) {
      const __m256d vw = _mm256_loadu_pd(w + i);
      const __m256d vx = _mm256_loadu_pd(x + i);
      const __m256d wx = _mm256_mul_pd(vw, vx);
      sw = _mm256_add_pd(sw, vw);
      swx = _mm256_add_pd(swx, wx);
      swxx = _mm256_fmadd_pd(wx, vx, swxx);
    }
  } else {
    for (; i + 4 <= n; i += 4) {
      const __m256d vx = _mm256_loadu_pd(x + i);
      swx = _mm256_add_pd(swx, vx);
      swxx = _mm256_fmadd_pd(vx, vx, swxx);
    }
    sw = _mm256_set1_pd(static_cast<double>(i) / 4.0);
  }
  Moments m{hsum(sw), hsum(swx), hsum(swxx)};
  for (; i < n; ++i) {
    const double wi = w ? w[i] : 1.0;
    m.sum_w += wi;
    m.sum_wx += wi * x[i];
    m.sum_wxx += wi * x[i] * x[i];
  }
  return m;
}

double gather_dot_avx2(const double* a, const double* b, const std::int32_t* idx, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m128i vi = _mm_loadu_si128(reinterpret_cast<const __m128i*>(idx + k));
    const __m256d va = _mm256_i32gather_pd(a, vi, 8);
    const __m256d vb = _mm256_i32gather_pd(b, vi, 8);
    acc = _mm256_fmadd_pd(va, vb, acc);
  }
  double s = hsum(acc);
  for (; k < n; ++k) s += a[idx[k]] * b[idx[k]];
  return s;
}

constinit const KernelTable kAvx2Table{"avx2",          dot_avx2,
                                       weighted_dot_avx2, axpy_avx2,
                                       multiply_avx2,     weighted_moments_avx2,
                                       gather_dot_avx2};

}  // namespace

const KernelTable* avx2_table_unchecked() { return &kAvx2Table; }

}  // namespace causalgap::kernels

#else

namespace causalgap::kernels {
const KernelTable* avx2_table_unchecked() { return nullptr; }
}  // namespace causalgap::kernels

#endif
