#include "kernels_impl.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)
#include <arm_neon.h>

namespace causalgap::kernels {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double weighted_dot_neon(const double* w, const double* a, const double* b, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    acc = vfmaq_f64(acc, vmulq_f64(vld1q_f64(w + i), vld1q_f64(a + i)), vld1q_f64(b + i));
  }
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) s += w[i] * a[i] * b[i];
  return s;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void multiply_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

Moments weighted_moments_neon(const double* w, const double* x, std::size_t n) {
  float64x2_t sw = vdupq_n_f64(0.0);
  float64x2_t swx = vdupq_n_f64(0.0);
  float64x2_t swxx = vdupq_n_f64(0.0);
  const float64x2_t ones = vdupq_n_f64(1.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t vw = w ? vld1q_f64(w + i) : ones;
    const float64x2_t vx = vld1q_f64(x + i);
    const float64x2_t wx = vmulq_f64(vw, vx);
    sw = vaddq_f64(sw, vw);
    swx = vaddq_f64(swx, wx);
    swxx = vfmaq_f64(swxx, wx, vx);
  }
  Moments m{vaddvq_f64(sw), vaddvq_f64(swx), vaddvq_f64(swxx)};
  for (; i < n; ++i) {
    const double wi = w ? w[i] : 1.0;
    m.sum_w += wi;
    m.sum_wx += wi * x[i];
    m.sum_wxx += wi * x[i] * x[i];
  }
  return m;
}

double gather_dot_neon(const double* a, const double* b, const std::int32_t* idx, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t k = 0;
  for (; k + 2 <= n; k += 2) {
    const double av[2] = {a[idx[k]], a[idx[k + 1]]};
    const double bv[2] = {b[idx[k]], b[idx[k + 1]]};
    acc = vfmaq_f64(acc, vld1q_f64(av), vld1q_f64(bv));
  }
  double s = vaddvq_f64(acc);
  for (; k < n; ++k) s += a[idx[k]] * b[idx[k]];
  return s;
}

constinit const KernelTable kNeonTable{"neon",          dot_neon,
                                       weighted_dot_neon, axpy_neon,
                                       multiply_neon,     weighted_moments_neon,
                                       gather_dot_neon};

}  // namespace

const KernelTable* neon_table_unchecked() { return &kNeonTable; }

}  // namespace causalgap::kernels

#else

namespace causalgap::kernels {
const KernelTable* neon_table_unchecked() { return nullptr; }
}  // namespace causalgap::kernels

#endif
