#pragma once

// Data-parallel reductions behind the regression, balance and forest code.
//
// Each kernel has a scalar reference implementation and, where the target
// supports it, an AVX2/FMA (x86-64) or NEON (aarch64) variant. The variant is
// chosen once per process from the CPU feature bits; setting the environment
// variable CAUSALGAP_KERNELS to "scalar" forces the reference path. Vector
// variants reassociate sums, so they agree with the scalar path to rounding,
// not bitwise. Within a process the choice is fixed, which keeps every run on
// the same machine bit-reproducible.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace causalgap::kernels {

struct Moments {
  double sum_w = 0.0;
  double sum_wx = 0.0;
  double sum_wxx = 0.0;
};

struct KernelTable {
  std::string_view name;
  // sum a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // sum w[i] * a[i] * b[i]
  double (*weighted_dot)(const double* w, const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out[i] = a[i] * b[i]; out may alias a or b
  void (*multiply)(const double* a, const double* b, double* out, std::size_t n);
  // (sum w, sum w x, sum w x^2); w == nullptr means unit weights
  Moments (*weighted_moments)(const double* w, const double* x, std::size_t n);
  // sum a[idx[k]] * b[idx[k]] over k < n
  double (*gather_dot)(const double* a, const double* b, const std::int32_t* idx, std::size_t n);
};

const KernelTable& scalar_table();
// nullptr when the variant is not compiled in or the CPU lacks the features.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// The table selected for this process.
const KernelTable& active();

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline double weighted_dot(std::span<const double> w, std::span<const double> a,
                           std::span<const double> b) {
  return active().weighted_dot(w.data(), a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

inline void multiply(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  active().multiply(a.data(), b.data(), out.data(), a.size());
}

inline Moments weighted_moments(std::span<const double> w, std::span<const double> x) {
  return active().weighted_moments(w.empty() ? nullptr : w.data(), x.data(), x.size());
}

inline double gather_dot(std::span<const double> a, std::span<const double> b,
                         std::span<const std::int32_t> idx) {
  return active().gather_dot(a.data(), b.data(), idx.data(), idx.size());
}

}  // namespace causalgap::kernels
