#include <catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

#include "causalgap/balance.hpp"
#include "causalgap/error.hpp"
#include "causalgap/rng.hpp"
#include "causalgap/simulate.hpp"

using namespace causalgap;
using Catch::Matchers::WithinAbs;

namespace {

// Two-pass weighted SMD written out directly.
double smd_two_pass(const std::vector<double>& x, const std::vector<double>& z, const std::vector<double>& w,
                    bool binary) {
  double mean[2] = {0, 0}, sw[2] = {0, 0}, var[2] = {0, 0};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const int a = z[i] == 1.0;
    sw[a] += w[i];
    mean[a] += w[i] * x[i];
  }
  for (int a = 0; a < 2; ++a) mean[a] /= sw[a];
  for (std::size_t i = 0; i < x.size(); ++i) {
    const int a = z[i] == 1.0;
    var[a] += w[i] * (x[i] - mean[a]) * (x[i] - mean[a]);
  }
  for (int a = 0; a < 2; ++a) var[a] = binary ? mean[a] * (1.0 - mean[a]) : var[a] / (sw[a] - 1.0);
  return (mean[1] - mean[0]) / std::sqrt((var[0] + var[1]) / 2.0);
}

std::string read(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("SMD agrees with a two-pass computation") {
  Philox4x32 g(3, 14, 0);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 30 + 10 * static_cast<std::size_t>(rep);
    std::vector<double> x(n), b(n), z(n), w(n), ones(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      z[i] = i % 2 == 0 ? 1.0 : (g.uniform() < 0.3 ? 1.0 : 0.0);
      x[i] = 1e6 + 50.0 * g.uniform() + 5.0 * z[i];  // large offset tests the shifted moments
      b[i] = g.uniform() < 0.4 + 0.2 * z[i] ? 1.0 : 0.0;
      w[i] = 0.5 + 3.0 * g.uniform();
    }
    CHECK_THAT(smd(x, z, {}, CovariateKind::Continuous), WithinAbs(smd_two_pass(x, z, ones, false), 1e-9));
    CHECK_THAT(smd(x, z, w, CovariateKind::Continuous), WithinAbs(smd_two_pass(x, z, w, false), 1e-9));
    CHECK_THAT(smd(b, z, w, CovariateKind::Binary), WithinAbs(smd_two_pass(b, z, w, true), 1e-12));
  }
}

TEST_CASE("SMD degenerate cases") {
  const std::vector<double> z{1, 1, 0, 0};
  CHECK(smd(std::vector<double>{2, 2, 2, 2}, z, {}, CovariateKind::Continuous) == 0.0);
  CHECK_THROWS_AS(smd(std::vector<double>{3, 3, 2, 2}, z, {}, CovariateKind::Continuous), DegenerateError);
  CHECK_THROWS_AS(smd(std::vector<double>{1, 2, 3, 4}, z, std::vector<double>{1, 1, 0, 0}, CovariateKind::Continuous),
                  DegenerateError);
  CHECK_THROWS(smd(std::vector<double>{1, 2}, z, {}, CovariateKind::Continuous));
}

TEST_CASE("balance table layout and identity adjustment") {
  DgpSpec spec = DgpSpec::canonical();
  spec.n = 500;
  const Simulation sim = generate(spec);
  const BalanceTable t = balance_table(sim.data, std::monostate{});
  REQUIRE(t.rows.size() == 14);
  CHECK(t.rows[0].label == "title[Assistant]");
  CHECK(t.rows[3].label == "working_years");
  CHECK(t.rows[4].label == "university_class[BM]");
  CHECK(t.rows[7].label == "department[AH]");
  CHECK(t.rows[13].label == "productivity_log");
  for (const BalanceRow& r : t.rows) CHECK(r.smd_after == r.smd_before);
  const BalanceTable u = balance_table(sim.data, std::vector<double>(500, 2.5));
  for (std::size_t k = 0; k < 14; ++k) {
    if (u.rows[k].kind == CovariateKind::Binary) CHECK_THAT(u.rows[k].smd_after, WithinAbs(t.rows[k].smd_before, 1e-12));
  }
  CHECK_THROWS(balance_table(sim.data, std::vector<double>(3, 1.0)));
}

TEST_CASE("love plot matches the golden fixture") {
  const std::string dir = FIXTURE_DIR;
  const Dataset d = load_dataset(dir + "/balance_units.csv", {}, 0.0).data;
  REQUIRE(d.size() == 60);
  std::vector<double> w(60);
  for (std::size_t i = 0; i < 60; ++i) w[i] = 1.0 + 0.5 * static_cast<double>(i % 3);
  const std::vector<LovePoint> pts = love_plot_data(balance_table(d, w));

  std::istringstream golden(read(dir + "/love_plot_golden.csv"));
  std::string line;
  std::getline(golden, line);
  CHECK(line == "label,smd_before,smd_after,threshold");
  std::size_t k = 0;
  while (std::getline(golden, line)) {
    if (line.empty()) continue;
    REQUIRE(k < pts.size());
    std::istringstream row(line);
    std::string label, before, after, thr;
    std::getline(row, label, ',');
    std::getline(row, before, ',');
    std::getline(row, after, ',');
    std::getline(row, thr, ',');
    INFO(label);
    CHECK(pts[k].label == label);
    CHECK_THAT(pts[k].smd_before, WithinAbs(std::stod(before), 1e-12));
    CHECK_THAT(pts[k].smd_after, WithinAbs(std::stod(after), 1e-12));
    CHECK(pts[k].threshold == std::stod(thr));
    ++k;
  }
  CHECK(k == pts.size());
  const std::string csv = format_love_plot_csv(pts);
  CHECK(csv.rfind("label,smd_before,smd_after,threshold\nworking_years,", 0) == 0);
}

TEST_CASE("matching improves balance on the confounded design") {
  const Simulation sim = generate(DgpSpec::canonical());
  const PropensityFit p = estimate_propensity(sim.data);
  const BalanceTable t = balance_table(sim.data, match_nn(p));
  double before = 0.0, after = 0.0;
  for (const BalanceRow& r : t.rows) {
    before = std::max(before, std::abs(r.smd_before));
    after = std::max(after, std::abs(r.smd_after));
  }
  CHECK(before > 0.2);
  CHECK(after < 0.1);
  const std::string csv = format_balance_csv(t);
  CHECK(csv.find("working_years,continuous,") != std::string::npos);
}
