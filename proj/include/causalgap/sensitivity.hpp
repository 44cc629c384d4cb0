#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "causalgap/data_model.hpp"
#include "causalgap/parametric.hpp"

namespace causalgap {

// t^2 / (t^2 + dof)
double partial_r2(double t_value, double dof);

// Share of residual variance an unobserved confounder must explain in both
// treatment and outcome to bring the estimate to (1 - q) of its size, or,
// with alpha, to make it insignificant at level alpha.
double robustness_value(double t_value, double dof, double q = 1.0, std::optional<double> alpha = std::nullopt);

// Estimate moved toward zero by the bias bound
// se * sqrt(dof) * sqrt(r2_yu * r2_zu / (1 - r2_zu)).
double adjusted_estimate(double estimate, double se, double dof, double r2_zu, double r2_yu);

struct ContourGrid {
  double estimate = 0.0;
  double se = 0.0;
  int dof = 0;
  std::vector<double> r2_zu;  // axis values, grid k * max / resolution
  std::vector<double> r2_yu;
  Eigen::MatrixXd adjusted;   // (r2_zu index, r2_yu index)
  // (r2_zu, r2_yu) pairs where the adjusted estimate is exactly zero, one
  // per r2_zu axis value whose zero falls inside the grid range.
  std::vector<std::pair<double, double>> zero_contour;
};

ContourGrid contour_data(double estimate, double se, int dof, int resolution = 50, double max = 0.5);

struct BenchmarkRow {
  std::string label;
  double r2_with_treatment = 0.0;  // partial R^2 of the covariate with treatment
  double r2_with_outcome = 0.0;    // partial R^2 with the outcome, given treatment
};

struct SensitivityReport {
  EffectEstimate estimate;
  int dof = 0;
  double t_value = 0.0;
  double alpha = 0.05;
  double q = 1.0;
  double partial_r2_treatment = 0.0;
  double rv_point = 0.0;
  double rv_alpha = 0.0;
  std::vector<BenchmarkRow> benchmarks;
};

// Fits outcome_log ~ treatment + covariates by OLS and reports partial R^2,
// both robustness values and a leave-one-covariate-out benchmark for each
// benchmark field (all terms that reference the field are dropped together).
SensitivityReport sensitivity_analysis(const Dataset& d, const Formula& covariates,
                                       const std::vector<Field>& benchmark_fields, double alpha = 0.05,
                                       double q = 1.0);

// (R^2_full - R^2_reduced) / (1 - R^2_reduced)
double partial_r2_from_fits(double r2_full, double r2_reduced);

std::string format_sensitivity_report(const SensitivityReport& r);
// series,r2_zu,r2_yu,adjusted_estimate with series grid, zero, rv or
// benchmark:<label>
std::string format_contours_csv(const ContourGrid& g, const SensitivityReport* report = nullptr);

}  // namespace causalgap
