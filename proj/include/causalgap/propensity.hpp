#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "causalgap/data_model.hpp"
#include "causalgap/estimation.hpp"

namespace causalgap {

// Treatment model: class-by-department indicators times productivity_log,
// plus title indicators times working_years. has_profile is not part of it.
Formula default_ps_spec();

struct PropensityFit {
  LogisticFit model;
  Eigen::VectorXd scores;        // clamped e(X_i)
  Eigen::VectorXd logit_scores;  // log(e / (1 - e)) of the clamped scores
  std::vector<double> treatment;
  std::string spec_label;

  std::size_t size() const { return static_cast<std::size_t>(scores.size()); }
};

PropensityFit estimate_propensity(const Dataset& d, const Formula& spec = default_ps_spec(),
                                  const LogisticOptions& options = {});

// Wraps externally supplied scores (clamped to [clamp, 1 - clamp]).
PropensityFit propensity_from_scores(std::span<const double> scores, std::span<const double> treatment,
                                     double clamp = 1e-6);

struct OverlapBand {
  double lo = 0.05;
  double hi = 0.95;
};

struct OverlapReport {
  std::vector<double> bin_edges;  // bins + 1 edges on [0, 1]
  std::vector<std::size_t> counts_treated;
  std::vector<std::size_t> counts_control;
  double min_treated = 0.0;
  double max_treated = 0.0;
  double min_control = 0.0;
  double max_control = 0.0;
  OverlapBand band;
  std::size_t outside_treated = 0;
  std::size_t outside_control = 0;
  double fail_fraction = 0.0;  // share of all units outside the band
  double fail_threshold = 0.1;
  bool passed = true;          // advisory: fail_fraction <= fail_threshold
};

OverlapReport positivity_check(const PropensityFit& p, OverlapBand band = {}, double fail_threshold = 0.1,
                               int bins = 40);

// bin_lo,bin_hi,count_treated,count_control
std::string format_overlap_csv(const OverlapReport& r);

}  // namespace causalgap
