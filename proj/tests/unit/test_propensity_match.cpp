#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "causalgap/error.hpp"
#include "causalgap/parametric.hpp"
#include "causalgap/propensity.hpp"
#include "causalgap/rng.hpp"
#include "causalgap/simulate.hpp"
#include "oracles.hpp"

using namespace causalgap;
using Catch::Matchers::WithinAbs;

namespace {

PropensityFit random_scores(std::size_t n, std::uint32_t index, bool coarse) {
  Philox4x32 g(31, 13, index);
  std::vector<double> e(n), z(n);
  for (std::size_t i = 0; i < n; ++i) {
    double u = 0.02 + 0.96 * g.uniform();
    if (coarse) u = std::round(u * 20.0) / 20.0;  // forces ties
    e[i] = u;
    z[i] = g.uniform() < u ? 1.0 : 0.0;
  }
  z[0] = 1.0;
  z[1] = 0.0;
  return propensity_from_scores(e, z);
}

}  // namespace

TEST_CASE("nearest-neighbour matching agrees with exhaustive search") {
  for (std::uint32_t rep = 0; rep < 100; ++rep) {
    const std::size_t n = 5 + (rep * 53) % 300;
    const PropensityFit p = random_scores(n, rep, rep % 3 == 0);
    for (double caliper : {0.01, 0.2, 10.0}) {
      const MatchResult fast = match_nn(p, caliper);
      const MatchResult slow = oracle::match(p, caliper);
      INFO("rep " << rep << " caliper " << caliper);
      CHECK(oracle::same_match(fast, slow));
      CHECK(fast.caliper_width == Catch::Approx(slow.caliper_width).epsilon(1e-14));
    }
  }
}

TEST_CASE("tie goes to the lower control index") {
  const std::vector<double> e{0.3, 0.5, 0.4, 0.4, 0.3};
  const std::vector<double> z{0, 1, 0, 0, 0};
  const MatchResult m = match_nn(propensity_from_scores(e, z), 100.0);
  REQUIRE(m.pairs.size() == 1);
  CHECK(m.pairs[0].control == 2);
  CHECK(m.unmatched_control == 3);
  CHECK(matched_weights(m) == std::vector<double>{0, 1, 1, 0, 0});
}

TEST_CASE("controls are reused and weighted by multiplicity") {
  const std::vector<double> e{0.5, 0.51, 0.49, 0.9, 0.1};
  const std::vector<double> z{0, 1, 1, 0, 1};
  const MatchResult m = match_nn(propensity_from_scores(e, z), 0.1);
  REQUIRE(m.pairs.size() == 2);
  CHECK(m.control_multiplicity.at(0) == 2);
  CHECK(m.unmatched_treated_ids == std::vector<std::size_t>{4});
  CHECK(matched_weights(m) == std::vector<double>{2, 1, 1, 0, 0});
}

TEST_CASE("matching needs both arms and spread") {
  CHECK_THROWS_AS(match_nn(propensity_from_scores(std::vector<double>{0.2, 0.4}, std::vector<double>{1, 1})),
                  DegenerateError);
  CHECK_THROWS_AS(match_nn(propensity_from_scores(std::vector<double>{0.4, 0.4}, std::vector<double>{1, 0})),
                  DegenerateError);
}

TEST_CASE("IPTW weights and truncation") {
  const std::vector<double> e{0.2, 0.5, 0.8, 0.25};
  const std::vector<double> z{1, 0, 0, 1};
  const PropensityFit p = propensity_from_scores(e, z);
  const std::vector<double> w = iptw_weights(p);
  CHECK_THAT(w[0], WithinAbs(5.0, 1e-12));
  CHECK_THAT(w[1], WithinAbs(2.0, 1e-12));
  CHECK_THAT(w[2], WithinAbs(5.0, 1e-12));
  CHECK_THAT(w[3], WithinAbs(4.0, 1e-12));
  const std::vector<double> t = iptw_weights(p, 0.75);
  // sorted 2,4,5,5; quantiles at 0.25 -> 3.5 and 0.75 -> 5
  CHECK_THAT(t[1], WithinAbs(3.5, 1e-12));
  CHECK_THAT(t[0], WithinAbs(5.0, 1e-12));
  CHECK_THROWS(iptw_weights(p, 0.5));
}

TEST_CASE("positivity histogram counts every unit once") {
  const std::vector<double> e{0.01, 0.2, 0.5, 0.99, 0.5, 0.96};
  const std::vector<double> z{1, 0, 1, 1, 0, 0};
  const OverlapReport r = positivity_check(propensity_from_scores(e, z), {}, 0.1, 10);
  std::size_t t = 0, c = 0;
  for (auto k : r.counts_treated) t += k;
  for (auto k : r.counts_control) c += k;
  CHECK(t == 3);
  CHECK(c == 3);
  CHECK(r.counts_treated[9] == 1);
  CHECK(r.outside_treated == 2);
  CHECK(r.outside_control == 1);
  CHECK_THAT(r.fail_fraction, WithinAbs(0.5, 1e-15));
  CHECK_FALSE(r.passed);
  CHECK(r.min_treated == 0.01);
  CHECK(r.max_control == 0.96);
  CHECK_THROWS(positivity_check(propensity_from_scores(e, z), {0.6, 0.4}));
}

TEST_CASE("propensity model on simulated data converges and recovers the score") {
  DgpSpec spec = DgpSpec::canonical();
  spec.n = 3000;
  spec.seed = 4;
  const Simulation sim = generate(spec);
  const PropensityFit p = estimate_propensity(sim.data);
  CHECK(p.model.converged);
  CHECK(p.model.max_abs_score < 1e-8);
  double err = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) err += std::abs(p.scores[static_cast<Eigen::Index>(i)] - sim.truth.score[i]);
  CHECK(err / static_cast<double>(p.size()) < 0.05);
  CHECK_THROWS_AS(estimate_propensity(sim.data, Formula::parse("treatment")), SpecError);
}

TEST_CASE("regression estimators on a randomized design") {
  DgpSpec spec = DgpSpec::randomized();
  spec.n = 4000;
  spec.seed = 12;
  const Simulation sim = generate(spec);
  const EffectEstimate ols = estimate_regression(sim.data, default_baseline_spec());
  CHECK(std::abs(ols.beta - sim.truth.ate) < 3.0 * ols.se);
  CHECK(ols.ci_hi - ols.ci_lo == Catch::Approx(2.0 * 1.96 * ols.se));
  const PropensityFit p = estimate_propensity(sim.data);
  const EffectEstimate adj = ate_ps_adjust(sim.data, p);
  CHECK(adj.estimand == Estimand::Ate);
  CHECK(std::abs(adj.beta - sim.truth.ate) < 3.0 * adj.se);
  const EffectEstimate psm = att_psm(sim.data, match_nn(p));
  CHECK(psm.estimand == Estimand::Att);
  CHECK(std::abs(psm.beta - sim.truth.att) < 3.0 * psm.se);
  const EffectEstimate pc = att_psm(sim.data, match_nn(p), default_ps_spec(), MatchedSe::PairCluster);
  CHECK(pc.se > 0.0);
  CHECK_THROWS_AS(estimate_regression(sim.data, Formula::parse("treatment")), SpecError);
}
