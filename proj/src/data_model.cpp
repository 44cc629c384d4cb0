#include "causalgap/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "causalgap/error.hpp"
#include "csv.hpp"

namespace causalgap {

double productivity_transform(double raw, ZeroRule rule) {
  switch (rule) {
    case ZeroRule::PlusOne:
      return std::log10(raw + 1.0);
    case ZeroRule::FloorOne:
      return std::log10(std::max(raw, 1.0));
  }
  return std::log10(raw + 1.0);
}

namespace {

struct FieldEntry {
  Field field;
  std::string_view name;
};

constexpr std::array<FieldEntry, 8> kFields{{
    {Field::Treatment, "treatment"},
    {Field::Title, "title"},
    {Field::UniversityClass, "university_class"},
    {Field::Department, "department"},
    {Field::WorkingYears, "working_years"},
    {Field::ProductivityLog, "productivity_log"},
    {Field::HasProfile, "has_profile"},
    {Field::OutcomeLog, "outcome_log"},
}};

template <class Enum, std::size_t N>
std::optional<Enum> parse_level(std::string_view s, const std::array<std::string_view, N>& levels) {
  for (std::size_t k = 0; k < N; ++k) {
    if (levels[k] == s) return static_cast<Enum>(k);
  }
  return std::nullopt;
}

}  // namespace

std::string_view field_name(Field f) {
  for (const auto& e : kFields) {
    if (e.field == f) return e.name;
  }
  return "?";
}

Field parse_field(std::string_view name) {
  for (const auto& e : kFields) {
    if (e.name == name) return e.field;
  }
  throw SpecError(fmt::format("unknown field '{}'", name));
}

bool is_categorical(Field f) {
  return f == Field::Title || f == Field::UniversityClass || f == Field::Department;
}

std::span<const std::string_view> field_levels(Field f) {
  switch (f) {
    case Field::Title:
      return kTitleLevels;
    case Field::UniversityClass:
      return kClassLevels;
    case Field::Department:
      return kDepartmentLevels;
    default:
      return {};
  }
}

// ---------------------------------------------------------------------------
// Dataset

Dataset Dataset::from_records(std::vector<UnitRecord> records, ZeroRule rule) {
  Dataset d;
  d.zero_rule_ = rule;
  d.records_ = std::move(records);
  const std::size_t n = d.records_.size();
  d.outcome_log_.resize(n);
  d.treatment_.resize(n);
  d.productivity_log_.resize(n);
  d.imputed_.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const UnitRecord& r = d.records_[i];
    d.outcome_log_[i] = std::log10(r.outcome_raw);
    d.treatment_[i] = static_cast<double>(r.treatment);
    if (r.productivity_raw) d.productivity_log_[i] = productivity_transform(*r.productivity_raw, rule);
  }
  return d;
}

bool Dataset::complete() const {
  return std::all_of(productivity_log_.begin(), productivity_log_.end(),
                     [](const auto& v) { return v.has_value(); });
}

std::size_t Dataset::count_treated() const {
  return static_cast<std::size_t>(
      std::count_if(records_.begin(), records_.end(), [](const UnitRecord& r) { return r.treatment == 1; }));
}

void Dataset::require_estimable() const {
  if (size() < 2) throw DegenerateError("dataset needs at least 2 units");
  const std::size_t treated = count_treated();
  if (treated == 0 || treated == size()) throw DegenerateError("both treatment arms must be present");
  if (!complete()) throw DegenerateError("productivity has missing values; run imputation first");
}

double Dataset::value(Field f, std::size_t i) const {
  const UnitRecord& r = records_[i];
  switch (f) {
    case Field::Treatment:
      return treatment_[i];
    case Field::Title:
      return static_cast<double>(r.title);
    case Field::UniversityClass:
      return static_cast<double>(r.university_class);
    case Field::Department:
      return static_cast<double>(r.department);
    case Field::WorkingYears:
      return r.working_years;
    case Field::ProductivityLog:
      if (!productivity_log_[i]) {
        throw DegenerateError(fmt::format("productivity missing for unit {}; run imputation first", i));
      }
      return *productivity_log_[i];
    case Field::HasProfile:
      return r.has_profile ? 1.0 : 0.0;
    case Field::OutcomeLog:
      return outcome_log_[i];
  }
  return 0.0;
}

std::vector<double> Dataset::column(Field f) const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = value(f, i);
  return out;
}

// ---------------------------------------------------------------------------
// CSV ingestion

namespace {

bool is_plain_decimal(std::string_view s) {
  if (s.empty()) return false;
  bool seen_dot = false;
  bool seen_digit = false;
  for (char c : s) {
    if (c == '.') {
      if (seen_dot) return false;
      seen_dot = true;
    } else if (c >= '0' && c <= '9') {
      seen_digit = true;
    } else {
      return false;
    }
  }
  return seen_digit;
}

double parse_decimal(std::string_view s, std::size_t line, std::string_view column) {
  if (!is_plain_decimal(s)) {
    throw RowError(line, fmt::format("column '{}': '{}' is not a plain non-negative decimal", column, s));
  }
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw RowError(line, fmt::format("column '{}': cannot parse '{}'", column, s));
  }
  return v;
}

int parse_flag(std::string_view s, std::size_t line, std::string_view column) {
  if (s == "0") return 0;
  if (s == "1") return 1;
  throw RowError(line, fmt::format("column '{}': expected 0 or 1, got '{}'", column, s));
}

}  // namespace

LoadResult parse_dataset(std::string_view text, const ColumnMap& columns, double salary_floor, ZeroRule rule) {
  detail::CsvReader reader(text);
  std::vector<std::string> header;
  if (!reader.next(header)) throw SchemaError("input is empty (no header row)");

  auto locate = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError(fmt::format("missing column '{}'", name));
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_salary = locate(columns.salary);
  const std::size_t c_treat = locate(columns.treatment);
  const std::size_t c_title = locate(columns.title);
  const std::size_t c_class = locate(columns.university_class);
  const std::size_t c_dept = locate(columns.department);
  const std::size_t c_years = locate(columns.working_years);
  const std::size_t c_prod = locate(columns.productivity);
  const std::size_t c_profile = locate(columns.has_profile);

  LoadResult result;
  std::vector<UnitRecord> records;
  std::vector<std::string> cells;
  while (reader.next(cells)) {
    const std::size_t line = reader.line();
    ++result.report.rows_read;
    if (cells.size() != header.size()) {
      throw RowError(line, fmt::format("expected {} cells, found {}", header.size(), cells.size()));
    }
    UnitRecord r;
    r.outcome_raw = parse_decimal(cells[c_salary], line, columns.salary);
    r.treatment = parse_flag(cells[c_treat], line, columns.treatment);
    const auto title = parse_level<Title>(cells[c_title], kTitleLevels);
    if (!title) throw RowError(line, fmt::format("unknown title '{}'", cells[c_title]));
    r.title = *title;
    const auto cls = parse_level<UniversityClass>(cells[c_class], kClassLevels);
    if (!cls) throw RowError(line, fmt::format("unknown university class '{}'", cells[c_class]));
    r.university_class = *cls;
    const auto dept = parse_level<Department>(cells[c_dept], kDepartmentLevels);
    if (!dept) throw RowError(line, fmt::format("unknown department '{}'", cells[c_dept]));
    r.department = *dept;
    r.working_years = parse_decimal(cells[c_years], line, columns.working_years);
    if (!cells[c_prod].empty()) r.productivity_raw = parse_decimal(cells[c_prod], line, columns.productivity);
    r.has_profile = parse_flag(cells[c_profile], line, columns.has_profile) == 1;

    if (r.outcome_raw < salary_floor) {
      ++result.report.dropped_below_floor;
      continue;
    }
    if (!(r.outcome_raw > 0.0)) throw RowError(line, "salary must be positive");
    if (!r.productivity_raw) ++result.report.null_productivity;
    records.push_back(r);
  }
  if (records.empty()) throw DegenerateError("no rows left after loading");
  result.report.rows_kept = records.size();
  result.data = Dataset::from_records(std::move(records), rule);
  return result;
}

LoadResult load_dataset(const std::filesystem::path& path, const ColumnMap& columns, double salary_floor,
                        ZeroRule rule) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str(), columns, salary_floor, rule);
}

std::string format_dataset(const Dataset& d, const ColumnMap& c) {
  std::string out = fmt::format("{},{},{},{},{},{},{},{}\n", c.salary, c.treatment, c.title, c.university_class,
                                c.department, c.working_years, c.productivity, c.has_profile);
  for (const UnitRecord& r : d.records()) {
    out += fmt::format("{},{},{},{},{},{},{},{}\n", r.outcome_raw, r.treatment,
                       kTitleLevels[static_cast<std::size_t>(r.title)],
                       kClassLevels[static_cast<std::size_t>(r.university_class)],
                       kDepartmentLevels[static_cast<std::size_t>(r.department)], r.working_years,
                       r.productivity_raw ? fmt::format("{}", *r.productivity_raw) : std::string{},
                       r.has_profile ? 1 : 0);
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, const Dataset& d, const ColumnMap& columns,
                   std::string_view stamp) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  if (!stamp.empty()) out << "# " << stamp << '\n';
  out << format_dataset(d, columns);
}

std::string format_load_report(const LoadReport& r) {
  return fmt::format("rows_read: {}\ndropped: {}\nnull_productivity: {}\nkept: {}\n", r.rows_read,
                     r.dropped_below_floor, r.null_productivity, r.rows_kept);
}

// ---------------------------------------------------------------------------
// Imputation

std::vector<Field> default_impute_keys() { return {Field::Treatment, Field::Department, Field::Title}; }

Dataset impute_group_mean(const Dataset& d, std::span<const Field> group_keys, ImputeScale scale) {
  if (group_keys.empty()) throw SpecError("imputation needs at least one group key");
  for (Field f : group_keys) {
    if (f == Field::ProductivityLog) throw SpecError("cannot group on the imputed field");
  }
  const std::size_t n = d.size();
  auto observed = [&](std::size_t i) -> std::optional<double> {
    if (scale == ImputeScale::Log) return d.productivity_log_[i];
    return d.records_[i].productivity_raw;
  };

  struct Acc {
    double sum = 0.0;
    std::size_t count = 0;
  };
  std::map<std::vector<double>, Acc> groups;
  Acc global;
  std::vector<std::vector<double>> keys(n);
  for (std::size_t i = 0; i < n; ++i) {
    keys[i].reserve(group_keys.size());
    for (Field f : group_keys) keys[i].push_back(d.value(f, i));
    Acc& g = groups[keys[i]];
    if (const auto v = observed(i)) {
      g.sum += *v;
      ++g.count;
      global.sum += *v;
      ++global.count;
    }
  }
  if (global.count == 0) throw DegenerateError("every productivity value is missing; nothing to impute from");
  const double global_mean = global.sum / static_cast<double>(global.count);

  Dataset out = d;
  for (std::size_t i = 0; i < n; ++i) {
    if (out.productivity_log_[i]) continue;
    const Acc& g = groups[keys[i]];
    const double mean = g.count > 0 ? g.sum / static_cast<double>(g.count) : global_mean;
    out.productivity_log_[i] = scale == ImputeScale::Log ? mean : productivity_transform(mean, d.zero_rule_);
    out.imputed_[i] = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Formulas

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace

Formula Formula::parse(std::string_view text) {
  Formula f;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t plus = text.find('+', start);
    const std::string_view piece =
        trim(text.substr(start, plus == std::string_view::npos ? std::string_view::npos : plus - start));
    start = plus == std::string_view::npos ? text.size() + 1 : plus + 1;
    if (piece == "1") continue;
    if (piece.empty()) {
      if (text.find_first_not_of(" \t") == std::string_view::npos) break;
      throw SpecError(fmt::format("empty term in formula '{}'", text));
    }
    Term term;
    std::size_t s = 0;
    while (s <= piece.size()) {
      const std::size_t colon = piece.find(':', s);
      const std::string_view name =
          trim(piece.substr(s, colon == std::string_view::npos ? std::string_view::npos : colon - s));
      s = colon == std::string_view::npos ? piece.size() + 1 : colon + 1;
      const Field field = parse_field(name);
      if (std::find(term.factors.begin(), term.factors.end(), field) != term.factors.end()) {
        throw SpecError(fmt::format("field '{}' repeated within a term", name));
      }
      term.factors.push_back(field);
    }
    f.terms.push_back(std::move(term));
  }
  return f;
}

std::string Formula::to_string() const {
  std::string out = "1";
  for (const Term& t : terms) {
    out += " + ";
    for (std::size_t k = 0; k < t.factors.size(); ++k) {
      if (k > 0) out += ':';
      out += field_name(t.factors[k]);
    }
  }
  return out;
}

Formula Formula::with_leading(Term t) const {
  Formula f;
  f.terms.reserve(terms.size() + 1);
  f.terms.push_back(std::move(t));
  f.terms.insert(f.terms.end(), terms.begin(), terms.end());
  return f;
}

bool Formula::references(Field field) const {
  return std::any_of(terms.begin(), terms.end(), [&](const Term& t) {
    return std::find(t.factors.begin(), t.factors.end(), field) != t.factors.end();
  });
}

// ---------------------------------------------------------------------------
// Design matrices

std::string column_label(std::span<const FactorLevel> parents) {
  if (parents.empty()) return "(intercept)";
  std::string out;
  for (std::size_t k = 0; k < parents.size(); ++k) {
    if (k > 0) out += ':';
    out += field_name(parents[k].field);
    if (parents[k].level >= 0) {
      out += '[';
      out += field_levels(parents[k].field)[static_cast<std::size_t>(parents[k].level)];
      out += ']';
    }
  }
  return out;
}

std::vector<std::string> DesignMatrix::labels() const {
  std::vector<std::string> out;
  out.reserve(columns.size());
  for (const auto& c : columns) out.push_back(c.label);
  return out;
}

std::optional<std::size_t> DesignMatrix::find(std::string_view label) const {
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j].label == label) return j;
  }
  return std::nullopt;
}

void DesignMatrix::append(std::string label, const Eigen::VectorXd& column) {
  if (find(label)) throw SpecError(fmt::format("duplicate column '{}'", label));
  if (static_cast<std::size_t>(column.size()) != rows()) throw SpecError("appended column has wrong length");
  values.conservativeResize(Eigen::NoChange, values.cols() + 1);
  values.col(values.cols() - 1) = column;
  columns.push_back({std::move(label), {}});
}

namespace {

// Enumerates the level combinations a term expands to, first factor slowest.
std::vector<std::vector<FactorLevel>> expand_term(const Term& term) {
  std::vector<Field> categorical;
  bool has_numeric = false;
  for (Field f : term.factors) {
    if (is_categorical(f)) {
      categorical.push_back(f);
    } else {
      has_numeric = true;
    }
  }
  std::vector<std::vector<int>> cells{{}};
  for (Field f : categorical) {
    std::vector<std::vector<int>> next;
    for (const auto& prefix : cells) {
      for (std::size_t k = 0; k < field_levels(f).size(); ++k) {
        auto cell = prefix;
        cell.push_back(static_cast<int>(k));
        next.push_back(std::move(cell));
      }
    }
    cells = std::move(next);
  }
  // Pure categorical terms drop the all-reference cell.
  if (!has_numeric && !categorical.empty()) cells.erase(cells.begin());

  std::vector<std::vector<FactorLevel>> out;
  for (const auto& cell : cells) {
    std::vector<FactorLevel> parents;
    std::size_t c = 0;
    for (Field f : term.factors) {
      parents.push_back({f, is_categorical(f) ? cell[c++] : -1});
    }
    out.push_back(std::move(parents));
  }
  return out;
}

}  // namespace

DesignMatrix build_design(const Dataset& d, const Formula& spec) {
  DesignMatrix X;
  X.columns.push_back({"(intercept)", {}});
  for (const Term& term : spec.terms) {
    if (term.factors.empty()) throw SpecError("empty term");
    for (auto& parents : expand_term(term)) {
      std::string label = column_label(parents);
      for (const auto& c : X.columns) {
        if (c.label == label) throw SpecError(fmt::format("duplicate column '{}'", label));
      }
      X.columns.push_back({std::move(label), std::move(parents)});
    }
  }

  const std::size_t n = d.size();
  const std::size_t p = X.columns.size();
  X.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  X.values.col(0).setOnes();
  std::map<Field, std::vector<double>> cache;
  for (const Term& term : spec.terms) {
    for (Field f : term.factors) {
      if (!cache.contains(f)) cache.emplace(f, d.column(f));
    }
  }
  for (std::size_t j = 1; j < p; ++j) {
    auto col = X.values.col(static_cast<Eigen::Index>(j));
    col.setOnes();
    for (const FactorLevel& fl : X.columns[j].parents) {
      const auto& v = cache.at(fl.field);
      if (fl.level >= 0) {
        for (std::size_t i = 0; i < n; ++i) {
          if (static_cast<int>(v[i]) != fl.level) col[static_cast<Eigen::Index>(i)] = 0.0;
        }
      } else {
        for (std::size_t i = 0; i < n; ++i) col[static_cast<Eigen::Index>(i)] *= v[i];
      }
    }
  }
  return X;
}

}  // namespace causalgap
