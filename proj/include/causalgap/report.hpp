#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "causalgap/parametric.hpp"

namespace causalgap {

// 100 * (mean_control - mean_treated) / mean_control on the raw scale.
double unadjusted_gap(double mean_control, double mean_treated);

struct GapInterval {
  double lo = 0.0;
  double hi = 0.0;
};

// The conversion is decreasing in beta, so the gap's lower end comes from
// the upper beta endpoint.
GapInterval gap_interval(double beta_lo, double beta_hi);

struct ArmMeans {
  double control = 0.0;
  double treated = 0.0;
};

struct SummaryRow {
  std::string label;                      // "Unadjusted" or a method name
  std::optional<EffectEstimate> effect;   // empty for the unadjusted row
  std::optional<ArmMeans> means;          // set for the unadjusted row
  std::optional<double> truth;            // known effect for the row's estimand

  // Percent fields are always derived from the stored beta or means.
  double gap_percent() const;
  std::optional<GapInterval> gap_ci() const;
  std::optional<bool> within_2se() const;
};

struct SummaryTable {
  std::vector<SummaryRow> rows;
};

// Rows in the order Unadjusted, OLS, OLS_INTERACT, PSM, IPTW, PS_ADJUST,
// FOREST; missing methods are skipped. truth maps an estimand to its value.
SummaryTable build_summary(const std::optional<ArmMeans>& means, const std::map<Method, EffectEstimate>& estimates,
                           const std::map<Estimand, double>& truth = {});

// method,estimand,beta,se,ci_lo,ci_hi,gap_percent,gap_ci_lo_percent,
// gap_ci_hi_percent,truth,within_2se; full precision.
std::string format_summary_csv(const SummaryTable& t);
// Fixed-width table, percents to two decimals.
std::string format_summary_text(const SummaryTable& t);

// Persisted estimator outputs between pipeline stages.
struct EstimateStore {
  std::optional<ArmMeans> means;
  std::map<Method, EffectEstimate> estimates;

  bool empty() const { return !means && estimates.empty(); }
};

// label,estimand,beta,se,ci_lo,ci_hi,dof,mean_control,mean_treated
std::string format_estimates_csv(const EstimateStore& s);
EstimateStore parse_estimates_csv(std::string_view text);

}  // namespace causalgap
