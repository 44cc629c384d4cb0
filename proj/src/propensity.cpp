#include "causalgap/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "causalgap/error.hpp"

namespace causalgap {

Formula default_ps_spec() {
  return Formula::parse("university_class:department:productivity_log + title:working_years");
}

namespace {

PropensityFit wrap_scores(Eigen::VectorXd scores, std::span<const double> treatment) {
  PropensityFit fit;
  fit.logit_scores.resize(scores.size());
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    fit.logit_scores[i] = std::log(scores[i] / (1.0 - scores[i]));
  }
  fit.scores = std::move(scores);
  fit.treatment.assign(treatment.begin(), treatment.end());
  return fit;
}

}  // namespace

PropensityFit estimate_propensity(const Dataset& d, const Formula& spec, const LogisticOptions& options) {
  d.require_estimable();
  if (spec.references(Field::Treatment) || spec.references(Field::OutcomeLog)) {
    throw SpecError("propensity formula may not reference treatment or outcome");
  }
  const DesignMatrix X = build_design(d, spec);
  LogisticFit model = fit_logistic(X, d.treatment(), {}, options);
  PropensityFit fit = wrap_scores(model.fitted_probabilities, d.treatment());
  fit.model = std::move(model);
  fit.spec_label = spec.to_string();
  return fit;
}

PropensityFit propensity_from_scores(std::span<const double> scores, std::span<const double> treatment,
                                     double clamp) {
  if (scores.size() != treatment.size()) throw Error("scores and treatment differ in length");
  Eigen::VectorXd s(static_cast<Eigen::Index>(scores.size()));
  for (std::size_t i = 0; i < scores.size(); ++i) {
    s[static_cast<Eigen::Index>(i)] = std::clamp(scores[i], clamp, 1.0 - clamp);
  }
  PropensityFit fit = wrap_scores(std::move(s), treatment);
  fit.spec_label = "external";
  return fit;
}

OverlapReport positivity_check(const PropensityFit& p, OverlapBand band, double fail_threshold, int bins) {
  if (!(band.lo > 0.0 && band.hi < 1.0 && band.lo < band.hi)) {
    throw Error(fmt::format("overlap band ({}, {}) must satisfy 0 < lo < hi < 1", band.lo, band.hi));
  }
  if (bins < 1) throw Error("need at least one histogram bin");
  OverlapReport r;
  r.band = band;
  r.fail_threshold = fail_threshold;
  const auto nb = static_cast<std::size_t>(bins);
  r.bin_edges.resize(nb + 1);
  for (std::size_t k = 0; k <= nb; ++k) r.bin_edges[k] = static_cast<double>(k) / static_cast<double>(nb);
  r.counts_treated.assign(nb, 0);
  r.counts_control.assign(nb, 0);

  constexpr double inf = std::numeric_limits<double>::infinity();
  r.min_treated = r.min_control = inf;
  r.max_treated = r.max_control = -inf;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double e = p.scores[static_cast<Eigen::Index>(i)];
    const bool treated = p.treatment[i] == 1.0;
    auto bin = static_cast<std::size_t>(e * static_cast<double>(nb));
    bin = std::min(bin, nb - 1);
    const bool outside = e < band.lo || e > band.hi;
    if (treated) {
      ++r.counts_treated[bin];
      r.min_treated = std::min(r.min_treated, e);
      r.max_treated = std::max(r.max_treated, e);
      r.outside_treated += outside ? 1 : 0;
    } else {
      ++r.counts_control[bin];
      r.min_control = std::min(r.min_control, e);
      r.max_control = std::max(r.max_control, e);
      r.outside_control += outside ? 1 : 0;
    }
  }
  r.fail_fraction = p.size() == 0 ? 0.0
                                  : static_cast<double>(r.outside_treated + r.outside_control) /
                                        static_cast<double>(p.size());
  r.passed = r.fail_fraction <= fail_threshold;
  return r;
}

std::string format_overlap_csv(const OverlapReport& r) {
  std::string out = "bin_lo,bin_hi,count_treated,count_control\n";
  for (std::size_t k = 0; k < r.counts_treated.size(); ++k) {
    out += fmt::format("{},{},{},{}\n", r.bin_edges[k], r.bin_edges[k + 1], r.counts_treated[k], r.counts_control[k]);
  }
  return out;
}

}  // namespace causalgap
