#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "causalgap/error.hpp"
#include "causalgap/simulate.hpp"

using namespace causalgap;
using Catch::Matchers::WithinAbs;

TEST_CASE("same seed gives identical data; different seeds differ") {
  DgpSpec spec = DgpSpec::canonical();
  spec.n = 300;
  const Simulation a = generate(spec);
  const Simulation b = generate(spec);
  CHECK(a.data.records() == b.data.records());
  CHECK(a.truth.tau == b.truth.tau);
  spec.seed = 2;
  CHECK_FALSE(generate(spec).data.records() == a.data.records());
}

TEST_CASE("unit draws do not depend on sample size") {
  DgpSpec small = DgpSpec::canonical();
  small.n = 50;
  DgpSpec big = small;
  big.n = 400;
  const Simulation s = generate(small);
  const Simulation b = generate(big);
  for (std::size_t i = 0; i < 50; ++i) CHECK(s.data[i] == b.data[i]);
}

TEST_CASE("zero effect has zero truth") {
  DgpSpec spec = DgpSpec::canonical();
  spec.effect = {EffectKind::Constant, 0.0, 0.0, 0.0, Department::AH};
  const Truth t = generate(spec).truth;
  CHECK(t.ate == 0.0);
  CHECK(t.att == 0.0);
  CHECK(t.overlap_ate == 0.0);
}

TEST_CASE("randomized design: every estimand equals the average effect") {
  DgpSpec spec = DgpSpec::randomized();
  spec.effect = {EffectKind::LinearYears, -0.03, -0.002, 12.0, Department::AH};
  const Simulation sim = generate(spec);
  double mean = 0.0;
  for (std::size_t i = 0; i < sim.data.size(); ++i) mean += -0.03 - 0.002 * (sim.data[i].working_years - 12.0);
  mean /= static_cast<double>(sim.data.size());
  CHECK_THAT(sim.truth.ate, WithinAbs(mean, 1e-14));
  CHECK_THAT(sim.truth.att, WithinAbs(mean, 1e-14));
  CHECK_THAT(sim.truth.overlap_ate, WithinAbs(mean, 1e-14));
  for (double e : sim.truth.score) CHECK(e == 0.5);
}

TEST_CASE("per-unit truth matches the effect function") {
  for (EffectKind k : {EffectKind::Constant, EffectKind::Step, EffectKind::LinearYears, EffectKind::ScoreLinear,
                       EffectKind::DepartmentShift}) {
    DgpSpec spec = DgpSpec::canonical();
    spec.n = 400;
    spec.profile_prob = 0.8;
    spec.effect = {k, -0.02, -0.05, 1.2, Department::SS};
    const Simulation sim = generate(spec);
    REQUIRE(sim.truth.tau.size() == spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
      const double e = 1.0 / (1.0 + std::exp(-true_logit(spec, sim.data, i)));
      CHECK_THAT(sim.truth.score[i], WithinAbs(e, 1e-15));
      CHECK(sim.truth.tau[i] == true_effect(spec, sim.data, i, sim.truth.score[i]));
    }
    double se = 0.0, set = 0.0;
    for (std::size_t i = 0; i < spec.n; ++i) {
      se += sim.truth.score[i];
      set += sim.truth.score[i] * sim.truth.tau[i];
    }
    CHECK_THAT(sim.truth.att, WithinAbs(set / se, 1e-14));
  }
}

TEST_CASE("outcome equals baseline plus effect plus noise of the right size") {
  DgpSpec spec = DgpSpec::canonical();
  const Simulation sim = generate(spec);
  double ss = 0.0;
  for (std::size_t i = 0; i < sim.data.size(); ++i) {
    const double r = sim.data.outcome_log()[i] - true_baseline(spec, sim.data, i) -
                     sim.truth.tau[i] * sim.data.treatment()[i];
    ss += r * r;
  }
  CHECK_THAT(std::sqrt(ss / static_cast<double>(sim.data.size())), WithinAbs(spec.noise_sd, 0.01));
}

TEST_CASE("missing profiles leave productivity empty") {
  DgpSpec spec = DgpSpec::canonical();
  spec.profile_prob = 0.7;
  const Simulation sim = generate(spec);
  std::size_t missing = 0;
  for (const UnitRecord& r : sim.data.records()) {
    CHECK(r.productivity_raw.has_value() == r.has_profile);
    missing += r.has_profile ? 0 : 1;
  }
  CHECK(std::abs(static_cast<double>(missing) / 4000.0 - 0.3) < 0.03);
}

TEST_CASE("difference in means is unbiased under randomization") {
  DgpSpec spec = DgpSpec::randomized();
  double bias = 0.0;
  for (std::uint64_t s = 1; s <= 50; ++s) {
    spec.seed = s;
    const Simulation sim = generate(spec);
    double y1 = 0.0, y0 = 0.0, n1 = 0.0, n0 = 0.0;
    for (std::size_t i = 0; i < sim.data.size(); ++i) {
      if (sim.data.treatment()[i] == 1.0) {
        y1 += sim.data.outcome_log()[i];
        n1 += 1.0;
      } else {
        y0 += sim.data.outcome_log()[i];
        n0 += 1.0;
      }
    }
    bias += (y1 / n1 - y0 / n0) - sim.truth.ate;
  }
  bias /= 50.0;
  CHECK(std::abs(bias) < 3.0 * spec.noise_sd / std::sqrt(static_cast<double>(spec.n)));
}

TEST_CASE("invalid specifications are rejected") {
  DgpSpec spec = DgpSpec::canonical();
  spec.n = 9;
  CHECK_THROWS_AS(generate(spec), SpecError);
  spec = DgpSpec::canonical();
  spec.noise_sd = -1.0;
  CHECK_THROWS_AS(generate(spec), SpecError);
  spec = DgpSpec::canonical();
  spec.title_probs = {0.5, 0.5, 0.5};
  CHECK_THROWS_AS(generate(spec), SpecError);
  spec = DgpSpec::canonical();
  spec.treatment.intercept = -200.0;
  CHECK_THROWS_AS(generate(spec), DegenerateError);
  CHECK(parse_effect_kind("score_linear") == EffectKind::ScoreLinear);
  CHECK_THROWS_AS(parse_effect_kind("quadratic"), SpecError);
}

TEST_CASE("generated data survive the input format") {
  DgpSpec spec = DgpSpec::canonical();
  spec.n = 200;
  spec.profile_prob = 0.9;
  const Simulation sim = generate(spec);
  const Dataset back = parse_dataset(format_dataset(sim.data), {}, 0.0).data;
  CHECK(back.records() == sim.data.records());
}
