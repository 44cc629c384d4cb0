#pragma once

#include <span>
#include <string>
#include <variant>
#include <vector>

#include "causalgap/data_model.hpp"
#include "causalgap/parametric.hpp"

namespace causalgap {

enum class CovariateKind { Continuous, Binary };

// Standardized mean difference, treated minus control, over the pooled
// standard deviation sqrt((var_t + var_c) / 2). Binary covariates use
// p(1 - p) as the arm variance. Weights are frequency weights: the
// continuous variance divides by (sum of weights - 1).
double smd(std::span<const double> values, std::span<const double> treatment, std::span<const double> weights,
           CovariateKind kind);

struct BalanceRow {
  std::string label;
  CovariateKind kind = CovariateKind::Continuous;
  double smd_before = 0.0;
  double smd_after = 0.0;
};

struct BalanceTable {
  std::vector<BalanceRow> rows;
};

// No adjustment, a matched sample, or explicit per-unit weights.
using Adjustment = std::variant<std::monostate, MatchResult, std::vector<double>>;

// Title, working years, class, department and productivity rows in that
// order: every categorical level as a binary row.
BalanceTable balance_table(const Dataset& d, const Adjustment& adjustment);

inline constexpr double kBalanceThreshold = 0.1;

struct LovePoint {
  std::string label;
  double smd_before;
  double smd_after;
  double threshold;
};

// Rows ordered by |smd_before| descending, ties by label.
std::vector<LovePoint> love_plot_data(const BalanceTable& t);

// label,kind,smd_before,smd_after
std::string format_balance_csv(const BalanceTable& t);
// label,smd_before,smd_after,threshold
std::string format_love_plot_csv(const std::vector<LovePoint>& points);

}  // namespace causalgap
