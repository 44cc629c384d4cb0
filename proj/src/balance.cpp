#include "causalgap/balance.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "causalgap/error.hpp"
#include "causalgap/kernels.hpp"

namespace causalgap {

namespace {

struct ArmStats {
  double weight = 0.0;
  double mean = 0.0;
  double var = 0.0;
};

// Moments are taken about `shift` to keep the one-pass variance accurate.
ArmStats arm_stats(std::span<const double> x, std::span<const double> w, double shift, CovariateKind kind) {
  std::vector<double> centered(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) centered[i] = x[i] - shift;
  const kernels::Moments m = kernels::weighted_moments(w, centered);
  ArmStats s;
  s.weight = m.sum_w;
  if (m.sum_w <= 0.0) return s;
  const double mc = m.sum_wx / m.sum_w;
  s.mean = mc + shift;
  if (kind == CovariateKind::Binary) {
    s.var = s.mean * (1.0 - s.mean);
  } else {
    const double ss = std::max(m.sum_wxx - m.sum_w * mc * mc, 0.0);
    s.var = m.sum_w > 1.0 ? ss / (m.sum_w - 1.0) : 0.0;
  }
  return s;
}

}  // namespace

double smd(std::span<const double> values, std::span<const double> treatment, std::span<const double> weights,
           CovariateKind kind) {
  if (values.size() != treatment.size() || (!weights.empty() && weights.size() != values.size())) {
    throw Error("smd inputs differ in length");
  }
  std::vector<double> xt, xc, wt, wc;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double wi = weights.empty() ? 1.0 : weights[i];
    if (treatment[i] == 1.0) {
      xt.push_back(values[i]);
      wt.push_back(wi);
    } else {
      xc.push_back(values[i]);
      wc.push_back(wi);
    }
  }
  const double shift = values.empty() ? 0.0 : values[0];
  const ArmStats t = arm_stats(xt, wt, shift, kind);
  const ArmStats c = arm_stats(xc, wc, shift, kind);
  if (t.weight <= 0.0 || c.weight <= 0.0) throw DegenerateError("smd needs positive weight in both arms");
  const double pooled = std::sqrt((t.var + c.var) / 2.0);
  const double diff = t.mean - c.mean;
  if (pooled == 0.0) {
    if (diff == 0.0) return 0.0;
    throw DegenerateError("smd undefined: zero pooled variance with different arm means");
  }
  return diff / pooled;
}

BalanceTable balance_table(const Dataset& d, const Adjustment& adjustment) {
  d.require_estimable();
  const std::size_t n = d.size();
  std::vector<double> w_after;
  if (const auto* m = std::get_if<MatchResult>(&adjustment)) {
    if (m->n != n) throw Error("match result does not belong to this dataset");
    w_after = matched_weights(*m);
  } else if (const auto* w = std::get_if<std::vector<double>>(&adjustment)) {
    if (w->size() != n) throw Error("adjustment weights do not match the dataset size");
    w_after = *w;
  }

  BalanceTable table;
  auto add = [&](std::string label, const std::vector<double>& v, CovariateKind kind) {
    BalanceRow row;
    row.label = std::move(label);
    row.kind = kind;
    row.smd_before = smd(v, d.treatment(), {}, kind);
    row.smd_after = w_after.empty() ? row.smd_before : smd(v, d.treatment(), w_after, kind);
    table.rows.push_back(std::move(row));
  };
  auto add_levels = [&](Field f) {
    const std::vector<double> codes = d.column(f);
    const auto levels = field_levels(f);
    for (std::size_t k = 0; k < levels.size(); ++k) {
      std::vector<double> ind(n);
      for (std::size_t i = 0; i < n; ++i) ind[i] = codes[i] == static_cast<double>(k) ? 1.0 : 0.0;
      add(fmt::format("{}[{}]", field_name(f), levels[k]), ind, CovariateKind::Binary);
    }
  };
  add_levels(Field::Title);
  add("working_years", d.column(Field::WorkingYears), CovariateKind::Continuous);
  add_levels(Field::UniversityClass);
  add_levels(Field::Department);
  add("productivity_log", d.column(Field::ProductivityLog), CovariateKind::Continuous);
  return table;
}

std::vector<LovePoint> love_plot_data(const BalanceTable& t) {
  if (t.rows.empty()) throw Error("balance table is empty");
  std::vector<LovePoint> out;
  out.reserve(t.rows.size());
  for (const BalanceRow& r : t.rows) out.push_back({r.label, r.smd_before, r.smd_after, kBalanceThreshold});
  std::sort(out.begin(), out.end(), [](const LovePoint& a, const LovePoint& b) {
    const double aa = std::abs(a.smd_before);
    const double bb = std::abs(b.smd_before);
    if (aa != bb) return aa > bb;
    return a.label < b.label;
  });
  return out;
}

std::string format_balance_csv(const BalanceTable& t) {
  std::string out = "label,kind,smd_before,smd_after\n";
  for (const BalanceRow& r : t.rows) {
    out += fmt::format("{},{},{},{}\n", r.label, r.kind == CovariateKind::Binary ? "binary" : "continuous",
                       r.smd_before, r.smd_after);
  }
  return out;
}

std::string format_love_plot_csv(const std::vector<LovePoint>& points) {
  std::string out = "label,smd_before,smd_after,threshold\n";
  for (const LovePoint& p : points) {
    out += fmt::format("{},{},{},{}\n", p.label, p.smd_before, p.smd_after, p.threshold);
  }
  return out;
}

}  // namespace causalgap
