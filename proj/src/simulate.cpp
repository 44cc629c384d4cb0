#include "causalgap/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <fmt/format.h>

#include "causalgap/error.hpp"
#include "causalgap/rng.hpp"

namespace causalgap {

namespace {

constexpr std::array<std::string_view, 5> kEffectNames{"constant", "step", "linear_years", "score_linear",
                                                       "department_shift"};

template <std::size_t N>
void check_probs(const std::array<double, N>& p, std::string_view what) {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw SpecError(fmt::format("{} probabilities must be nonnegative", what));
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) throw SpecError(fmt::format("{} probabilities sum to {}, not 1", what, s));
}

template <std::size_t N>
std::size_t draw_level(const std::array<double, N>& p, double u) {
  double c = 0.0;
  for (std::size_t k = 0; k + 1 < N; ++k) {
    c += p[k];
    if (u < c) return k;
  }
  return N - 1;
}

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double productivity_or_mean(const DgpSpec& spec, const Dataset& d, std::size_t i) {
  const auto& p = d.productivity_log()[i];
  if (p) return *p;
  return spec.productivity_mean_by_title[static_cast<std::size_t>(d[i].title)];
}

double eval_index(const LinearIndex& f, const DgpSpec& spec, const Dataset& d, std::size_t i) {
  const UnitRecord& r = d[i];
  const auto t = static_cast<std::size_t>(r.title);
  const auto c = static_cast<std::size_t>(r.university_class);
  const auto k = static_cast<std::size_t>(r.department);
  return f.intercept + f.years_by_title[t] * r.working_years +
         f.productivity_by_cell[c][k] * productivity_or_mean(spec, d, i);
}

}  // namespace

std::string_view effect_kind_name(EffectKind k) { return kEffectNames[static_cast<std::size_t>(k)]; }

EffectKind parse_effect_kind(std::string_view s) {
  for (std::size_t k = 0; k < kEffectNames.size(); ++k) {
    if (kEffectNames[k] == s) return static_cast<EffectKind>(k);
  }
  throw SpecError(fmt::format("unknown effect kind '{}'", s));
}

DgpSpec DgpSpec::canonical() {
  DgpSpec s;
  s.baseline.intercept = 5.03;
  s.baseline.years_by_title = {0.0045, 0.0030, 0.0032};
  s.baseline.productivity_by_cell = {{
      {-0.06, 0.02, 0.00, -0.04, -0.05, -0.03},
      {-0.05, 0.07, 0.06, -0.03, -0.04, 0.01},
      {-0.02, 0.16, 0.13, 0.04, 0.03, 0.05},
  }};
  s.treatment.intercept = 1.1;
  s.treatment.years_by_title = {-0.045, -0.035, -0.030};
  constexpr std::array<double, 6> dept{-0.40, -0.70, -0.55, -0.65, -0.45, -0.75};
  constexpr std::array<double, 3> cls{0.10, 0.0, -0.10};
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t k = 0; k < 6; ++k) s.treatment.productivity_by_cell[c][k] = dept[k] + cls[c];
  }
  s.effect = {EffectKind::Constant, -0.03, 0.0, 0.0, Department::AH};
  return s;
}

DgpSpec DgpSpec::randomized() {
  DgpSpec s = canonical();
  s.treatment = LinearIndex{};
  return s;
}

double true_logit(const DgpSpec& spec, const Dataset& d, std::size_t i) {
  return eval_index(spec.treatment, spec, d, i);
}

double true_baseline(const DgpSpec& spec, const Dataset& d, std::size_t i) {
  return eval_index(spec.baseline, spec, d, i);
}

double true_effect(const DgpSpec& spec, const Dataset& d, std::size_t i, double score) {
  const EffectSpec& e = spec.effect;
  switch (e.kind) {
    case EffectKind::Constant:
      return e.a;
    case EffectKind::Step:
      return e.a + (productivity_or_mean(spec, d, i) > e.threshold ? e.b : 0.0);
    case EffectKind::LinearYears:
      return e.a + e.b * (d[i].working_years - e.threshold);
    case EffectKind::ScoreLinear:
      return e.a + e.b * score;
    case EffectKind::DepartmentShift:
      return e.a + (d[i].department == e.department ? e.b : 0.0);
  }
  return e.a;
}

Simulation generate(const DgpSpec& spec) {
  if (spec.n < 10) throw SpecError("simulation needs n >= 10");
  if (!(spec.noise_sd >= 0.0)) throw SpecError("noise_sd must be nonnegative");
  if (!(spec.productivity_sd >= 0.0)) throw SpecError("productivity_sd must be nonnegative");
  if (!(spec.years_shape > 0.0)) throw SpecError("years_shape must be positive");
  if (!(spec.profile_prob >= 0.0 && spec.profile_prob <= 1.0)) throw SpecError("profile_prob must lie in [0, 1]");
  check_probs(spec.title_probs, "title");
  check_probs(spec.class_probs, "university_class");
  check_probs(spec.department_probs, "department");

  const std::size_t n = spec.n;
  std::vector<UnitRecord> records(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::uint32_t>(i);
    Philox4x32 cov(spec.seed, stream::kCovariates, idx);
    UnitRecord& r = records[i];
    const std::size_t t = draw_level(spec.title_probs, cov.uniform());
    r.title = static_cast<Title>(t);
    r.university_class = static_cast<UniversityClass>(draw_level(spec.class_probs, cov.uniform()));
    r.department = static_cast<Department>(draw_level(spec.department_probs, cov.uniform()));
    boost::random::gamma_distribution<double> years(spec.years_shape,
                                                    spec.years_mean_by_title[t] / spec.years_shape);
    r.working_years = std::round(years(cov));
    boost::random::normal_distribution<double> latent(spec.productivity_mean_by_title[t], spec.productivity_sd);
    const double count = std::max(0.0, std::round(std::pow(10.0, latent(cov)) - 1.0));

    Philox4x32 profile(spec.seed, stream::kProfile, idx);
    r.has_profile = spec.profile_prob >= 1.0 || profile.uniform() < spec.profile_prob;
    if (r.has_profile) r.productivity_raw = count;
    r.outcome_raw = 1.0;  // filled in below
  }

  // Treatment and outcome need the derived covariates, so go through a
  // provisional dataset.
  Dataset pre = Dataset::from_records(records);
  Truth truth;
  truth.tau.resize(n);
  truth.score.resize(n);
  std::size_t treated = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::uint32_t>(i);
    const double e = expit(true_logit(spec, pre, i));
    truth.score[i] = e;
    truth.tau[i] = true_effect(spec, pre, i, e);
    Philox4x32 tr(spec.seed, stream::kTreatment, idx);
    records[i].treatment = tr.uniform() < e ? 1 : 0;
    treated += static_cast<std::size_t>(records[i].treatment);
    Philox4x32 out(spec.seed, stream::kOutcome, idx);
    boost::random::normal_distribution<double> noise(0.0, 1.0);
    const double y = true_baseline(spec, pre, i) + truth.tau[i] * records[i].treatment + spec.noise_sd * noise(out);
    records[i].outcome_raw = std::pow(10.0, y);
  }
  if (treated == 0 || treated == n) {
    throw DegenerateError(fmt::format("simulated sample has {} treated of {} units; one arm is empty", treated, n));
  }

  double se = 0.0, set = 0.0, so = 0.0, sot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = truth.score[i];
    se += e;
    set += e * truth.tau[i];
    so += e * (1.0 - e);
    sot += e * (1.0 - e) * truth.tau[i];
  }
  truth.ate = std::accumulate(truth.tau.begin(), truth.tau.end(), 0.0) / static_cast<double>(n);
  truth.att = set / se;
  truth.overlap_ate = sot / so;
  return {Dataset::from_records(std::move(records)), std::move(truth)};
}

}  // namespace causalgap
