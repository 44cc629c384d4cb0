#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "causalgap/kernels.hpp"
#include "causalgap/rng.hpp"

using causalgap::Philox4x32;
namespace kernels = causalgap::kernels;

TEST_CASE("Philox4x32-10 matches the published known-answer vectors") {
  using B = Philox4x32::Block;
  using K = Philox4x32::Key;
  CHECK(Philox4x32::bijection(B{0, 0, 0, 0}, K{0, 0}) == B{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(Philox4x32::bijection(B{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, K{0xffffffff, 0xffffffff}) ==
        B{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(Philox4x32::bijection(B{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, K{0xa4093822, 0x299f31d0}) ==
        B{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("stream output is the bijection of (block, index, domain) under the seed key") {
  Philox4x32 g(0x0000000200000001ull, 7, 3);
  const auto b0 = Philox4x32::bijection({0, 0, 3, 7}, {1, 2});
  const auto b1 = Philox4x32::bijection({1, 0, 3, 7}, {1, 2});
  for (int k = 0; k < 4; ++k) CHECK(g() == b0[k]);
  for (int k = 0; k < 4; ++k) CHECK(g() == b1[k]);
}

TEST_CASE("streams are independent of draw order") {
  Philox4x32 a(42, 1, 5);
  std::vector<std::uint32_t> first;
  for (int k = 0; k < 10; ++k) first.push_back(a());
  Philox4x32 other(42, 1, 6);
  for (int k = 0; k < 100; ++k) other();
  Philox4x32 b(42, 1, 5);
  for (int k = 0; k < 10; ++k) CHECK(b() == first[k]);
  CHECK(Philox4x32(42, 1, 5)() != Philox4x32(42, 2, 5)());
  CHECK(Philox4x32(42, 1, 5)() != Philox4x32(43, 1, 5)());
}

TEST_CASE("uniform and bounded draws stay in range and look uniform") {
  Philox4x32 g(9, 1, 0);
  double sum = 0.0;
  const int n = 200000;
  for (int k = 0; k < n; ++k) {
    const double u = g.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / n - 0.5) < 0.005);

  std::vector<int> counts(7, 0);
  for (int k = 0; k < 70000; ++k) {
    const auto v = g.below32(7);
    REQUIRE(v < 7u);
    ++counts[v];
  }
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
  for (int k = 0; k < 1000; ++k) REQUIRE(g.below(3) < 3u);
}

namespace {

std::vector<double> random_vector(std::size_t n, std::uint32_t index) {
  Philox4x32 g(77, 9, index);
  std::vector<double> v(n);
  for (double& x : v) x = 4.0 * g.uniform() - 2.0;
  return v;
}

void check_table(const kernels::KernelTable& t) {
  const kernels::KernelTable& ref = kernels::scalar_table();
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 15u, 16u, 33u, 1000u}) {
    const auto a = random_vector(n, 1);
    const auto b = random_vector(n, 2);
    auto w = random_vector(n, 3);
    for (double& x : w) x = std::abs(x);
    double scale = 1.0;
    for (std::size_t i = 0; i < n; ++i) scale += std::abs(a[i] * b[i]) * (1.0 + w[i]);
    const double tol = 1e-13 * scale;
    CHECK(std::abs(t.dot(a.data(), b.data(), n) - ref.dot(a.data(), b.data(), n)) <= tol);
    CHECK(std::abs(t.weighted_dot(w.data(), a.data(), b.data(), n) - ref.weighted_dot(w.data(), a.data(), b.data(), n)) <=
          tol);

    auto y1 = b;
    auto y2 = b;
    t.axpy(0.37, a.data(), y1.data(), n);
    ref.axpy(0.37, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(y1[i] - y2[i]) <= 1e-15 * (1.0 + std::abs(y2[i])));

    std::vector<double> m1(n), m2(n);
    t.multiply(a.data(), b.data(), m1.data(), n);
    ref.multiply(a.data(), b.data(), m2.data(), n);
    CHECK(m1 == m2);

    for (const double* wp : {static_cast<const double*>(nullptr), static_cast<const double*>(w.data())}) {
      const auto s1 = t.weighted_moments(wp, a.data(), n);
      const auto s2 = ref.weighted_moments(wp, a.data(), n);
      CHECK(std::abs(s1.sum_w - s2.sum_w) <= 1e-13 * (1.0 + s2.sum_w));
      CHECK(std::abs(s1.sum_wx - s2.sum_wx) <= 1e-13 * scale * 4.0);
      CHECK(std::abs(s1.sum_wxx - s2.sum_wxx) <= 1e-13 * scale * 8.0);
    }

    std::vector<std::int32_t> idx;
    for (std::size_t i = 0; i < n; i += 2) idx.push_back(static_cast<std::int32_t>(n - 1 - i));
    CHECK(std::abs(t.gather_dot(a.data(), b.data(), idx.data(), idx.size()) -
                   ref.gather_dot(a.data(), b.data(), idx.data(), idx.size())) <= tol);
  }
}

}  // namespace

TEST_CASE("scalar kernels agree with plain loops") {
  const kernels::KernelTable& t = kernels::scalar_table();
  const auto a = random_vector(101, 4);
  const auto b = random_vector(101, 5);
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] * b[i];
  CHECK(std::abs(t.dot(a.data(), b.data(), a.size()) - d) < 1e-12);
  const auto m = t.weighted_moments(nullptr, a.data(), a.size());
  CHECK(m.sum_w == 101.0);
  CHECK(std::abs(m.sum_wx - std::accumulate(a.begin(), a.end(), 0.0)) < 1e-12);
}

TEST_CASE("vector kernels agree with the scalar reference") {
  if (const auto* avx = kernels::avx2_table()) {
    INFO("avx2");
    check_table(*avx);
  }
  if (const auto* neon = kernels::neon_table()) {
    INFO("neon");
    check_table(*neon);
  }
  check_table(kernels::active());
}
