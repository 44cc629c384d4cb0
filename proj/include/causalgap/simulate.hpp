#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "causalgap/data_model.hpp"

namespace causalgap {

enum class EffectKind {
  Constant,         // a
  Step,             // a + b * [productivity_log > threshold]
  LinearYears,      // a + b * (working_years - threshold)
  ScoreLinear,      // a + b * e(x), e the true propensity
  DepartmentShift,  // a + b * [department == department]
};

std::string_view effect_kind_name(EffectKind k);
EffectKind parse_effect_kind(std::string_view s);

struct EffectSpec {
  EffectKind kind = EffectKind::Constant;
  double a = -0.03;
  double b = 0.0;
  double threshold = 0.0;
  Department department = Department::AH;
};

// Coefficients of a function that is linear in the columns of
// class:department:productivity_log + title:working_years.
struct LinearIndex {
  double intercept = 0.0;
  std::array<double, 3> years_by_title{};
  std::array<std::array<double, 6>, 3> productivity_by_cell{};  // [class][department]
};

struct DgpSpec {
  std::size_t n = 4000;
  std::uint64_t seed = 1;

  std::array<double, 3> title_probs{0.30, 0.28, 0.42};
  std::array<double, 3> class_probs{0.14, 0.36, 0.50};
  std::array<double, 6> department_probs{0.17, 0.11, 0.18, 0.20, 0.18, 0.16};
  // Working years ~ round(Gamma(shape, mean / shape)) by title.
  double years_shape = 4.0;
  std::array<double, 3> years_mean_by_title{5.5, 13.0, 24.0};
  // Latent log10(i10 + 1) ~ Normal(mean by title, sd); the recorded count
  // is the nearest integer of 10^latent - 1, floored at 0.
  std::array<double, 3> productivity_mean_by_title{0.95, 1.30, 1.62};
  double productivity_sd = 0.40;
  // Probability that a unit has a productivity record at all.
  double profile_prob = 1.0;

  LinearIndex treatment;  // logit of the true propensity
  LinearIndex baseline;   // outcome_log without treatment or noise
  EffectSpec effect;
  double noise_sd = 0.145;

  // Confounded default: treated units have fewer years and lower
  // productivity within cells, and both drive the baseline outcome.
  static DgpSpec canonical();
  // Same covariates and baseline, propensity 1/2 for every unit.
  static DgpSpec randomized();
};

struct Truth {
  double ate = 0.0;
  double att = 0.0;          // sum e*tau / sum e over the realized sample
  double overlap_ate = 0.0;  // sum e(1-e)*tau / sum e(1-e)
  std::vector<double> tau;
  std::vector<double> score;  // true propensity
};

struct Simulation {
  Dataset data;
  Truth truth;
};

// Throws DegenerateError when n < 10 or either arm ends up empty.
Simulation generate(const DgpSpec& spec);

// Evaluated on the unit's recorded covariates. Units without a productivity
// value use the latent mean of their title.
double true_logit(const DgpSpec& spec, const Dataset& d, std::size_t i);
double true_baseline(const DgpSpec& spec, const Dataset& d, std::size_t i);
double true_effect(const DgpSpec& spec, const Dataset& d, std::size_t i, double score);

}  // namespace causalgap
