#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "causalgap/data_model.hpp"
#include "causalgap/estimation.hpp"
#include "causalgap/propensity.hpp"

namespace causalgap {

enum class Method { Ols, OlsInteract, Psm, Iptw, PsAdjust, Forest };
enum class Estimand { Att, Ate, OverlapAte };

std::string_view method_name(Method m);
std::string_view estimand_name(Estimand e);
Method parse_method(std::string_view s);
Estimand parse_estimand(std::string_view s);

// 100 * (1 - 10^beta): percent by which the treated outcome falls short of
// the control outcome for a coefficient on the log10 scale.
double beta_to_gap_percent(double beta);

// A treatment effect on the log10-outcome scale with a 95% interval.
struct EffectEstimate {
  Method method = Method::Ols;
  Estimand estimand = Estimand::Ate;
  double beta = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  int dof = -1;  // residual df of the underlying regression, -1 if none

  double gap_percent() const { return beta_to_gap_percent(beta); }
  double t_value() const { return beta / se; }
};

// ci = beta -/+ 1.96 se
EffectEstimate make_effect(Method method, Estimand estimand, double beta, double se, int dof = -1);

// Baseline covariates: reference-coded title, class and department plus
// working_years and productivity_log.
Formula default_baseline_spec();

// OLS of outcome_log on treatment + covariates.
EffectEstimate estimate_regression(const Dataset& d, const Formula& covariates, Method method = Method::Ols,
                                   const OlsOptions& options = {});

struct MatchPair {
  std::size_t treated;
  std::size_t control;
  double distance;  // |logit difference|
};

struct MatchResult {
  std::vector<MatchPair> pairs;
  std::map<std::size_t, std::size_t> control_multiplicity;
  std::vector<std::size_t> unmatched_treated_ids;
  std::size_t unmatched_treated = 0;
  std::size_t unmatched_control = 0;  // controls never used
  double caliper_width = 0.0;         // logit units
  std::size_t n = 0;                  // units in the matched dataset
};

// 1:1 nearest-neighbour matching on the logit score, with replacement.
// Treated units are visited in dataset order; ties go to the lower control
// index. caliper_width = caliper_mult * SD(logit scores over all units).
MatchResult match_nn(const PropensityFit& p, double caliper_mult = 0.2);

// Per-unit weights of the matched sample: 1 for matched treated units,
// multiplicity for controls, 0 otherwise.
std::vector<double> matched_weights(const MatchResult& m);

enum class MatchedSe {
  Classical,    // weighted OLS on the matched sample
  UnitRobust,   // sandwich with one cluster per unit, so a reused control counts k^2
  PairCluster,  // sandwich clustered on match pairs (controls duplicated per use)
};

EffectEstimate att_psm(const Dataset& d, const MatchResult& m, const Formula& outcome_spec = default_ps_spec(),
                       MatchedSe se = MatchedSe::UnitRobust);

// Z/e + (1-Z)/(1-e), optionally clipped to the [1 - q, q] weight quantiles.
std::vector<double> iptw_weights(const PropensityFit& p, std::optional<double> truncate_at = std::nullopt);

EffectEstimate ate_iptw(const Dataset& d, const PropensityFit& p, const Formula& outcome_spec = default_ps_spec(),
                        std::optional<double> truncate_at = std::nullopt, SeKind se = SeKind::HC1);

// OLS of outcome_log on {1, treatment, e}.
EffectEstimate ate_ps_adjust(const Dataset& d, const PropensityFit& p);

// treated_id,control_id,logit_distance
std::string format_matches_csv(const MatchResult& m);

}  // namespace causalgap
