#include "causalgap/kernels.hpp"

namespace causalgap::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double weighted_dot_scalar(const double* w, const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += w[i] * a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void multiply_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

Moments weighted_moments_scalar(const double* w, const double* x, std::size_t n) {
  Moments m;
  for (std::size_t i = 0; i < n; ++i) {
    const double wi = w ? w[i] : 1.0;
    m.sum_w += wi;
    m.sum_wx += wi * x[i];
    m.sum_wxx += wi * x[i] * x[i];
  }
  return m;
}

double gather_dot_scalar(const double* a, const double* b, const std::int32_t* idx, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += a[idx[k]] * b[idx[k]];
  return s;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{"scalar",           dot_scalar,
                                 weighted_dot_scalar, axpy_scalar,
                                 multiply_scalar,     weighted_moments_scalar,
                                 gather_dot_scalar};
  return table;
}

}  // namespace causalgap::kernels
