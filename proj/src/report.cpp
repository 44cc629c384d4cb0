#include "causalgap/report.hpp"

#include <charconv>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "causalgap/error.hpp"
#include "csv.hpp"

namespace causalgap {

double unadjusted_gap(double mean_control, double mean_treated) {
  if (!(mean_control > 0.0)) throw DegenerateError("unadjusted gap needs a positive control mean");
  return 100.0 * (mean_control - mean_treated) / mean_control;
}

GapInterval gap_interval(double beta_lo, double beta_hi) {
  return {beta_to_gap_percent(beta_hi), beta_to_gap_percent(beta_lo)};
}

double SummaryRow::gap_percent() const {
  if (effect) return beta_to_gap_percent(effect->beta);
  if (means) return unadjusted_gap(means->control, means->treated);
  return std::numeric_limits<double>::quiet_NaN();
}

std::optional<GapInterval> SummaryRow::gap_ci() const {
  if (!effect) return std::nullopt;
  return gap_interval(effect->ci_lo, effect->ci_hi);
}

std::optional<bool> SummaryRow::within_2se() const {
  if (!effect || !truth) return std::nullopt;
  return std::abs(effect->beta - *truth) <= 2.0 * effect->se;
}

SummaryTable build_summary(const std::optional<ArmMeans>& means, const std::map<Method, EffectEstimate>& estimates,
                           const std::map<Estimand, double>& truth) {
  SummaryTable t;
  if (means) {
    SummaryRow r;
    r.label = "Unadjusted";
    r.means = means;
    t.rows.push_back(std::move(r));
  }
  for (Method m : {Method::Ols, Method::OlsInteract, Method::Psm, Method::Iptw, Method::PsAdjust, Method::Forest}) {
    const auto it = estimates.find(m);
    if (it == estimates.end()) continue;
    SummaryRow r;
    r.label = std::string(method_name(m));
    r.effect = it->second;
    if (const auto tr = truth.find(it->second.estimand); tr != truth.end()) r.truth = tr->second;
    t.rows.push_back(std::move(r));
  }
  return t;
}

namespace {

std::string opt(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string(); }

}  // namespace

std::string format_summary_csv(const SummaryTable& t) {
  std::string out =
      "method,estimand,beta,se,ci_lo,ci_hi,gap_percent,gap_ci_lo_percent,gap_ci_hi_percent,truth,within_2se\n";
  for (const SummaryRow& r : t.rows) {
    if (!r.effect) {
      out += fmt::format("{},,,,,,{},,,,\n", r.label, r.gap_percent());
      continue;
    }
    const EffectEstimate& e = *r.effect;
    const GapInterval g = *r.gap_ci();
    const auto w = r.within_2se();
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", r.label, estimand_name(e.estimand), e.beta, e.se, e.ci_lo,
                       e.ci_hi, r.gap_percent(), g.lo, g.hi, opt(r.truth), w ? (*w ? "1" : "0") : "");
  }
  return out;
}

std::string format_summary_text(const SummaryTable& t) {
  std::string out = fmt::format("{:<13} {:<12} {:>9} {:>22} {:>8} {:>18}\n", "method", "estimand", "beta",
                                "95% CI", "gap %", "gap 95% CI");
  for (const SummaryRow& r : t.rows) {
    if (!r.effect) {
      out += fmt::format("{:<13} {:<12} {:>9} {:>22} {:>8.2f} {:>18}\n", r.label, "", "", "", r.gap_percent(), "");
      continue;
    }
    const EffectEstimate& e = *r.effect;
    const GapInterval g = *r.gap_ci();
    out += fmt::format("{:<13} {:<12} {:>9.4f} {:>22} {:>8.2f} {:>18}\n", r.label, estimand_name(e.estimand), e.beta,
                       fmt::format("[{:.4f}, {:.4f}]", e.ci_lo, e.ci_hi), r.gap_percent(),
                       fmt::format("[{:.2f}, {:.2f}]", g.lo, g.hi));
  }
  return out;
}

std::string format_estimates_csv(const EstimateStore& s) {
  std::string out = "label,estimand,beta,se,ci_lo,ci_hi,dof,mean_control,mean_treated\n";
  if (s.means) out += fmt::format("UNADJUSTED,,,,,,,{},{}\n", s.means->control, s.means->treated);
  for (const auto& [m, e] : s.estimates) {
    out += fmt::format("{},{},{},{},{},{},{},,\n", method_name(m), estimand_name(e.estimand), e.beta, e.se, e.ci_lo,
                       e.ci_hi, e.dof);
  }
  return out;
}

namespace {

double to_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw RowError(line, fmt::format("'{}' is not a number", s));
  return v;
}

}  // namespace

EstimateStore parse_estimates_csv(std::string_view text) {
  detail::CsvReader reader(text);
  std::vector<std::string> cells;
  EstimateStore s;
  if (!reader.next(cells)) return s;
  if (cells.size() != 9 || cells[0] != "label") throw SchemaError("estimates file has an unexpected header");
  while (reader.next(cells)) {
    if (cells.size() != 9) throw RowError(reader.line(), "expected 9 fields");
    if (cells[0] == "UNADJUSTED") {
      s.means = ArmMeans{to_double(cells[7], reader.line()), to_double(cells[8], reader.line())};
      continue;
    }
    EffectEstimate e;
    e.method = parse_method(cells[0]);
    e.estimand = parse_estimand(cells[1]);
    e.beta = to_double(cells[2], reader.line());
    e.se = to_double(cells[3], reader.line());
    e.ci_lo = to_double(cells[4], reader.line());
    e.ci_hi = to_double(cells[5], reader.line());
    e.dof = static_cast<int>(to_double(cells[6], reader.line()));
    s.estimates[e.method] = e;
  }
  return s;
}

}  // namespace causalgap
