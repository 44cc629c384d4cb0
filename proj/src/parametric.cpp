#include "causalgap/parametric.hpp"

#include <algorithm>
#include <cmath>
#include <array>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "causalgap/error.hpp"
#include "causalgap/kernels.hpp"

namespace causalgap {

namespace {

constexpr std::array<std::string_view, 6> kMethodNames{"OLS", "OLS_INTERACT", "PSM", "IPTW", "PS_ADJUST", "FOREST"};
constexpr std::array<std::string_view, 3> kEstimandNames{"ATT", "ATE", "OVERLAP_ATE"};

Term treatment_term() { return Term{{Field::Treatment}}; }

}  // namespace

std::string_view method_name(Method m) { return kMethodNames[static_cast<std::size_t>(m)]; }
std::string_view estimand_name(Estimand e) { return kEstimandNames[static_cast<std::size_t>(e)]; }

Method parse_method(std::string_view s) {
  for (std::size_t k = 0; k < kMethodNames.size(); ++k) {
    if (kMethodNames[k] == s) return static_cast<Method>(k);
  }
  throw Error(fmt::format("unknown method '{}'", s));
}

Estimand parse_estimand(std::string_view s) {
  for (std::size_t k = 0; k < kEstimandNames.size(); ++k) {
    if (kEstimandNames[k] == s) return static_cast<Estimand>(k);
  }
  throw Error(fmt::format("unknown estimand '{}'", s));
}

double beta_to_gap_percent(double beta) { return 100.0 * (1.0 - std::pow(10.0, beta)); }

EffectEstimate make_effect(Method method, Estimand estimand, double beta, double se, int dof) {
  EffectEstimate e;
  e.method = method;
  e.estimand = estimand;
  e.beta = beta;
  e.se = se;
  e.ci_lo = beta - 1.96 * se;
  e.ci_hi = beta + 1.96 * se;
  e.dof = dof;
  return e;
}

Formula default_baseline_spec() {
  return Formula::parse("title + university_class + department + working_years + productivity_log");
}

namespace {

EffectEstimate treatment_effect(const OlsFit& fit, Method method, Estimand estimand) {
  const std::size_t j = fit.index_of("treatment");
  if (std::find(fit.pruned.begin(), fit.pruned.end(), "treatment") != fit.pruned.end()) {
    throw RankDeficientError({"treatment"});
  }
  return make_effect(method, estimand, fit.coefficients[static_cast<Eigen::Index>(j)],
                     fit.standard_errors[static_cast<Eigen::Index>(j)], fit.residual_df);
}

DesignMatrix outcome_design(const Dataset& d, const Formula& covariates) {
  if (covariates.references(Field::Treatment) || covariates.references(Field::OutcomeLog)) {
    throw SpecError("covariate formula may not reference treatment or outcome");
  }
  return build_design(d, covariates.with_leading(treatment_term()));
}

}  // namespace

EffectEstimate estimate_regression(const Dataset& d, const Formula& covariates, Method method,
                                   const OlsOptions& options) {
  d.require_estimable();
  const DesignMatrix X = outcome_design(d, covariates);
  return treatment_effect(fit_ols(X, d.outcome_log(), {}, options), method, Estimand::Ate);
}

// ---------------------------------------------------------------------------
// Matching

MatchResult match_nn(const PropensityFit& p, double caliper_mult) {
  const std::size_t n = p.size();
  std::vector<std::size_t> controls;
  std::size_t treated_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (p.treatment[i] == 1.0) {
      ++treated_count;
    } else {
      controls.push_back(i);
    }
  }
  if (treated_count == 0 || controls.empty()) throw DegenerateError("matching needs both arms");

  const std::span<const double> logit(p.logit_scores.data(), n);
  const kernels::Moments mom = kernels::weighted_moments({}, logit);
  const double mean = mom.sum_wx / mom.sum_w;
  double ss = 0.0;
  for (double v : logit) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) throw DegenerateError("logit propensity scores have zero spread; the propensity model is degenerate");

  MatchResult m;
  m.n = n;
  m.caliper_width = caliper_mult * sd;

  std::sort(controls.begin(), controls.end(), [&](std::size_t a, std::size_t b) {
    return logit[a] < logit[b] || (logit[a] == logit[b] && a < b);
  });
  std::vector<double> sorted_logit(controls.size());
  for (std::size_t k = 0; k < controls.size(); ++k) sorted_logit[k] = logit[controls[k]];

  for (std::size_t t = 0; t < n; ++t) {
    if (p.treatment[t] != 1.0) continue;
    const double v = logit[t];
    const auto pos = static_cast<std::size_t>(std::lower_bound(sorted_logit.begin(), sorted_logit.end(), v) -
                                              sorted_logit.begin());
    double best = std::numeric_limits<double>::infinity();
    if (pos > 0) best = std::min(best, std::abs(v - sorted_logit[pos - 1]));
    if (pos < sorted_logit.size()) best = std::min(best, std::abs(v - sorted_logit[pos]));
    // Every control at exactly the best distance sits in a contiguous run on
    // either side of pos; take the lowest dataset index among them.
    std::size_t chosen = n;
    for (std::size_t k = pos; k > 0 && std::abs(v - sorted_logit[k - 1]) == best; --k) {
      chosen = std::min(chosen, controls[k - 1]);
    }
    for (std::size_t k = pos; k < sorted_logit.size() && std::abs(v - sorted_logit[k]) == best; ++k) {
      chosen = std::min(chosen, controls[k]);
    }
    if (best > m.caliper_width) {
      m.unmatched_treated_ids.push_back(t);
      continue;
    }
    m.pairs.push_back({t, chosen, best});
    ++m.control_multiplicity[chosen];
  }
  m.unmatched_treated = m.unmatched_treated_ids.size();
  m.unmatched_control = controls.size() - m.control_multiplicity.size();
  return m;
}

std::vector<double> matched_weights(const MatchResult& m) {
  std::vector<double> w(m.n, 0.0);
  for (const MatchPair& pr : m.pairs) w[pr.treated] = 1.0;
  for (const auto& [c, k] : m.control_multiplicity) w[c] = static_cast<double>(k);
  return w;
}

EffectEstimate att_psm(const Dataset& d, const MatchResult& m, const Formula& outcome_spec, MatchedSe se) {
  if (m.pairs.empty()) throw DegenerateError("no matched pairs");
  if (m.n != d.size()) throw Error("match result does not belong to this dataset");
  d.require_estimable();
  const DesignMatrix X = outcome_design(d, outcome_spec);
  if (se != MatchedSe::PairCluster) {
    const std::vector<double> w = matched_weights(m);
    OlsOptions options;
    options.se = se == MatchedSe::UnitRobust ? SeKind::HC1 : SeKind::Classical;
    return treatment_effect(fit_ols(X, d.outcome_log(), w, options), Method::Psm, Estimand::Att);
  }
  // One row per pair member, so a control used k times appears k times.
  DesignMatrix expanded;
  expanded.columns = X.columns;
  const auto rows = static_cast<Eigen::Index>(2 * m.pairs.size());
  expanded.values.resize(rows, X.values.cols());
  std::vector<double> y(static_cast<std::size_t>(rows));
  std::vector<int> cluster(static_cast<std::size_t>(rows));
  for (std::size_t k = 0; k < m.pairs.size(); ++k) {
    const auto a = static_cast<Eigen::Index>(2 * k);
    expanded.values.row(a) = X.values.row(static_cast<Eigen::Index>(m.pairs[k].treated));
    expanded.values.row(a + 1) = X.values.row(static_cast<Eigen::Index>(m.pairs[k].control));
    y[2 * k] = d.outcome_log()[m.pairs[k].treated];
    y[2 * k + 1] = d.outcome_log()[m.pairs[k].control];
    cluster[2 * k] = cluster[2 * k + 1] = static_cast<int>(k);
  }
  OlsOptions options;
  options.se = SeKind::Cluster;
  options.clusters = cluster;
  return treatment_effect(fit_ols(expanded, y, {}, options), Method::Psm, Estimand::Att);
}

// ---------------------------------------------------------------------------
// Weighting

namespace {

// Linear-interpolation sample quantile of sorted data.
double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::vector<double> iptw_weights(const PropensityFit& p, std::optional<double> truncate_at) {
  std::vector<double> w(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double e = p.scores[static_cast<Eigen::Index>(i)];
    w[i] = p.treatment[i] == 1.0 ? 1.0 / e : 1.0 / (1.0 - e);
  }
  if (truncate_at) {
    const double q = std::max(*truncate_at, 1.0 - *truncate_at);
    if (!(q > 0.5 && q <= 1.0)) throw Error("truncation quantile must lie in (0.5, 1]");
    std::vector<double> sorted = w;
    std::sort(sorted.begin(), sorted.end());
    const double hi = quantile_sorted(sorted, q);
    const double lo = quantile_sorted(sorted, 1.0 - q);
    for (double& x : w) x = std::clamp(x, lo, hi);
  }
  return w;
}

EffectEstimate ate_iptw(const Dataset& d, const PropensityFit& p, const Formula& outcome_spec,
                        std::optional<double> truncate_at, SeKind se) {
  if (p.size() != d.size()) throw Error("propensity fit does not belong to this dataset");
  d.require_estimable();
  const DesignMatrix X = outcome_design(d, outcome_spec);
  const std::vector<double> w = iptw_weights(p, truncate_at);
  OlsOptions options;
  options.se = se;
  return treatment_effect(fit_ols(X, d.outcome_log(), w, options), Method::Iptw, Estimand::Ate);
}

EffectEstimate ate_ps_adjust(const Dataset& d, const PropensityFit& p) {
  if (p.size() != d.size()) throw Error("propensity fit does not belong to this dataset");
  d.require_estimable();
  DesignMatrix X = build_design(d, Formula{{treatment_term()}});
  X.append("propensity_score", p.scores);
  return treatment_effect(fit_ols(X, d.outcome_log()), Method::PsAdjust, Estimand::Ate);
}

std::string format_matches_csv(const MatchResult& m) {
  std::string out = "treated_id,control_id,logit_distance\n";
  for (const MatchPair& pr : m.pairs) out += fmt::format("{},{},{}\n", pr.treated, pr.control, pr.distance);
  return out;
}

}  // namespace causalgap
