#include "causalgap/sensitivity.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include "causalgap/error.hpp"

namespace causalgap {

double partial_r2(double t_value, double dof) {
  if (!(dof >= 1.0)) throw Error("partial R^2 needs dof >= 1");
  const double t2 = t_value * t_value;
  return t2 / (t2 + dof);
}

double robustness_value(double t_value, double dof, double q, std::optional<double> alpha) {
  if (!(dof >= 1.0)) throw Error("robustness value needs dof >= 1");
  if (!(q >= 0.0)) throw Error("q must be nonnegative");
  double f = q * std::abs(t_value) / std::sqrt(dof);
  if (alpha) {
    if (!(dof >= 2.0)) throw Error("robustness value at a significance level needs dof >= 2");
    if (!(*alpha > 0.0 && *alpha < 1.0)) throw Error("alpha must lie in (0, 1)");
    const boost::math::students_t dist(dof - 1.0);
    const double crit = boost::math::quantile(boost::math::complement(dist, *alpha / 2.0));
    f = std::max(f - crit / std::sqrt(dof - 1.0), 0.0);
  }
  const double f2 = f * f;
  return 0.5 * (std::sqrt(f2 * f2 + 4.0 * f2) - f2);
}

double adjusted_estimate(double estimate, double se, double dof, double r2_zu, double r2_yu) {
  if (!(r2_zu >= 0.0 && r2_zu < 1.0 && r2_yu >= 0.0 && r2_yu <= 1.0)) {
    throw Error("confounder partial R^2 values must lie in [0, 1)");
  }
  const double bias = se * std::sqrt(dof) * std::sqrt(r2_yu * r2_zu / (1.0 - r2_zu));
  const double sign = estimate < 0.0 ? -1.0 : 1.0;
  return estimate - sign * bias;
}

ContourGrid contour_data(double estimate, double se, int dof, int resolution, double max) {
  if (resolution < 2) throw Error("contour grid needs at least two points per axis");
  if (!(max > 0.0 && max < 1.0)) throw Error("contour range must lie in (0, 1)");
  if (dof < 1) throw Error("contour grid needs dof >= 1");
  ContourGrid g;
  g.estimate = estimate;
  g.se = se;
  g.dof = dof;
  const auto res = static_cast<std::size_t>(resolution);
  for (std::size_t k = 0; k < res; ++k) {
    const double v = static_cast<double>(k) * max / static_cast<double>(res);
    g.r2_zu.push_back(v);
    g.r2_yu.push_back(v);
  }
  g.adjusted.resize(resolution, resolution);
  const double df = static_cast<double>(dof);
  for (std::size_t a = 0; a < res; ++a) {
    for (std::size_t b = 0; b < res; ++b) {
      g.adjusted(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
          adjusted_estimate(estimate, se, df, g.r2_zu[a], g.r2_yu[b]);
    }
  }
  // Solve |estimate| = se sqrt(dof) sqrt(r2_yu r2_zu / (1 - r2_zu)) for r2_yu.
  for (double zu : g.r2_zu) {
    if (zu <= 0.0) continue;
    const double yu = estimate * estimate * (1.0 - zu) / (se * se * df * zu);
    if (yu < max) g.zero_contour.emplace_back(zu, yu);
  }
  return g;
}

double partial_r2_from_fits(double r2_full, double r2_reduced) {
  if (r2_reduced >= 1.0) return 0.0;
  return std::max(0.0, (r2_full - r2_reduced) / (1.0 - r2_reduced));
}

namespace {

Formula without_field(const Formula& f, Field drop) {
  Formula out;
  for (const Term& t : f.terms) {
    if (std::find(t.factors.begin(), t.factors.end(), drop) == t.factors.end()) out.terms.push_back(t);
  }
  return out;
}

}  // namespace

SensitivityReport sensitivity_analysis(const Dataset& d, const Formula& covariates,
                                       const std::vector<Field>& benchmark_fields, double alpha, double q) {
  d.require_estimable();
  if (covariates.references(Field::Treatment) || covariates.references(Field::OutcomeLog)) {
    throw SpecError("covariate formula may not reference treatment or outcome");
  }
  const Term treat{{Field::Treatment}};
  const DesignMatrix full = build_design(d, covariates.with_leading(treat));
  const OlsFit fit = fit_ols(full, d.outcome_log());
  const std::size_t j = fit.index_of("treatment");
  if (std::find(fit.pruned.begin(), fit.pruned.end(), "treatment") != fit.pruned.end()) {
    throw RankDeficientError({"treatment"});
  }
  SensitivityReport r;
  r.estimate = make_effect(Method::Ols, Estimand::Ate, fit.coefficients[static_cast<Eigen::Index>(j)],
                           fit.standard_errors[static_cast<Eigen::Index>(j)], fit.residual_df);
  r.dof = fit.residual_df;
  r.t_value = r.estimate.t_value();
  r.alpha = alpha;
  r.q = q;
  const double df = static_cast<double>(r.dof);
  r.partial_r2_treatment = partial_r2(r.t_value, df);
  r.rv_point = robustness_value(r.t_value, df, q);
  r.rv_alpha = robustness_value(r.t_value, df, q, alpha);

  const DesignMatrix cov_only = build_design(d, covariates);
  const double r2_z_full = fit_ols(cov_only, d.treatment()).r_squared;
  for (Field f : benchmark_fields) {
    if (!covariates.references(f)) {
      throw SpecError(fmt::format("benchmark '{}' does not appear in the covariate formula", field_name(f)));
    }
    const Formula reduced = without_field(covariates, f);
    BenchmarkRow row;
    row.label = std::string(field_name(f));
    row.r2_with_treatment =
        partial_r2_from_fits(r2_z_full, fit_ols(build_design(d, reduced), d.treatment()).r_squared);
    row.r2_with_outcome = partial_r2_from_fits(
        fit.r_squared, fit_ols(build_design(d, reduced.with_leading(treat)), d.outcome_log()).r_squared);
    r.benchmarks.push_back(std::move(row));
  }
  return r;
}

std::string format_sensitivity_report(const SensitivityReport& r) {
  std::string out;
  out += fmt::format("estimate: {}\n", r.estimate.beta);
  out += fmt::format("se: {}\n", r.estimate.se);
  out += fmt::format("t_value: {}\n", r.t_value);
  out += fmt::format("dof: {}\n", r.dof);
  out += fmt::format("partial_r2_treatment: {}\n", r.partial_r2_treatment);
  out += fmt::format("q: {}\n", r.q);
  out += fmt::format("rv_point: {}\n", r.rv_point);
  out += fmt::format("alpha: {}\n", r.alpha);
  out += fmt::format("rv_alpha: {}\n", r.rv_alpha);
  for (const BenchmarkRow& b : r.benchmarks) {
    out += fmt::format("benchmark {}: r2_with_treatment={} r2_with_outcome={}\n", b.label, b.r2_with_treatment,
                       b.r2_with_outcome);
  }
  return out;
}

std::string format_contours_csv(const ContourGrid& g, const SensitivityReport* report) {
  std::string out = "series,r2_zu,r2_yu,adjusted_estimate\n";
  const double df = static_cast<double>(g.dof);
  for (std::size_t a = 0; a < g.r2_zu.size(); ++a) {
    for (std::size_t b = 0; b < g.r2_yu.size(); ++b) {
      out += fmt::format("grid,{},{},{}\n", g.r2_zu[a], g.r2_yu[b],
                         g.adjusted(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)));
    }
  }
  for (const auto& [zu, yu] : g.zero_contour) out += fmt::format("zero,{},{},0\n", zu, yu);
  if (report) {
    const double rv = report->rv_point;
    out += fmt::format("rv,{},{},{}\n", rv, rv, adjusted_estimate(g.estimate, g.se, df, rv, rv));
    for (const BenchmarkRow& b : report->benchmarks) {
      if (b.r2_with_treatment >= 1.0) continue;
      out += fmt::format("benchmark:{},{},{},{}\n", b.label, b.r2_with_treatment, b.r2_with_outcome,
                         adjusted_estimate(g.estimate, g.se, df, b.r2_with_treatment, b.r2_with_outcome));
    }
  }
  return out;
}

}  // namespace causalgap
