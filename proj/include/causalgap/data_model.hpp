#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace causalgap {

// Categorical domains. Enumerator order is alphabetical; the first level is
// the reference level when a factor is dummy coded on its own.
enum class Title : std::uint8_t { Assistant, Associate, Full };
enum class UniversityClass : std::uint8_t { BM, DRUH, DUVA };
enum class Department : std::uint8_t { AH, B, MHS, NS, SS, TE };

inline constexpr std::array<std::string_view, 3> kTitleLevels{"Assistant", "Associate", "Full"};
inline constexpr std::array<std::string_view, 3> kClassLevels{"BM", "DRUH", "DUVA"};
inline constexpr std::array<std::string_view, 6> kDepartmentLevels{"AH", "B", "MHS", "NS", "SS", "TE"};

// One observation as it appears in the input file.
struct UnitRecord {
  double outcome_raw = 0.0;  // currency per year, > 0
  int treatment = 0;         // 0 control, 1 treated
  Title title = Title::Assistant;
  UniversityClass university_class = UniversityClass::BM;
  Department department = Department::AH;
  double working_years = 0.0;
  std::optional<double> productivity_raw;  // i10-style count; the only nullable field
  bool has_profile = false;

  bool operator==(const UnitRecord&) const = default;
};

// How a productivity count is put on the log scale.
enum class ZeroRule {
  PlusOne,    // log10(count + 1)
  FloorOne,   // log10(max(count, 1))
};

double productivity_transform(double raw, ZeroRule rule = ZeroRule::PlusOne);

// Variables a formula or grouping can refer to.
enum class Field {
  Treatment,
  Title,
  UniversityClass,
  Department,
  WorkingYears,
  ProductivityLog,
  HasProfile,
  OutcomeLog,
};

std::string_view field_name(Field f);
// Throws SpecError for an unknown name.
Field parse_field(std::string_view name);
bool is_categorical(Field f);
// Level names of a categorical field (empty for numeric fields).
std::span<const std::string_view> field_levels(Field f);

enum class ImputeScale {
  Log,  // average productivity_log within the group
  Raw,  // average the raw count, then transform
};

// Immutable table of records plus derived log-scale columns. Derived columns
// are always computed from the raw fields, never read from input.
class Dataset {
 public:
  static Dataset from_records(std::vector<UnitRecord> records, ZeroRule rule = ZeroRule::PlusOne);

  std::size_t size() const { return records_.size(); }
  const std::vector<UnitRecord>& records() const { return records_; }
  const UnitRecord& operator[](std::size_t i) const { return records_[i]; }
  ZeroRule zero_rule() const { return zero_rule_; }

  std::span<const double> outcome_log() const { return outcome_log_; }
  std::span<const double> treatment() const { return treatment_; }
  const std::vector<std::optional<double>>& productivity_log() const { return productivity_log_; }
  // True for units whose productivity_log was filled in by imputation.
  const std::vector<bool>& imputed() const { return imputed_; }

  bool complete() const;
  std::size_t count_treated() const;
  // Throws DegenerateError unless n >= 2, both arms present and no
  // productivity value is missing.
  void require_estimable() const;

  // Numeric value of field for unit i; categoricals return the level index.
  double value(Field f, std::size_t i) const;
  std::vector<double> column(Field f) const;

 private:
  friend Dataset impute_group_mean(const Dataset&, std::span<const Field>, ImputeScale);
  std::vector<UnitRecord> records_;
  std::vector<double> outcome_log_;
  std::vector<double> treatment_;
  std::vector<std::optional<double>> productivity_log_;
  std::vector<bool> imputed_;
  ZeroRule zero_rule_ = ZeroRule::PlusOne;
};

// Input column names, one per record field.
struct ColumnMap {
  std::string salary = "salary";
  std::string treatment = "gender";
  std::string title = "title";
  std::string university_class = "university_class";
  std::string department = "department";
  std::string working_years = "working_years";
  std::string productivity = "i10_index";
  std::string has_profile = "has_scholar_id";
};

struct LoadReport {
  std::size_t rows_read = 0;
  std::size_t dropped_below_floor = 0;
  std::size_t null_productivity = 0;
  std::size_t rows_kept = 0;
};

struct LoadResult {
  Dataset data;
  LoadReport report;
};

// Reads a comma-separated file with a header row. Lines starting with '#'
// are comments. Rows with salary below salary_floor are dropped and counted.
LoadResult load_dataset(const std::filesystem::path& path, const ColumnMap& columns = {},
                        double salary_floor = 27000.0, ZeroRule rule = ZeroRule::PlusOne);
// Parses CSV text; line numbers in errors count from the header as line 1.
LoadResult parse_dataset(std::string_view text, const ColumnMap& columns = {},
                         double salary_floor = 27000.0, ZeroRule rule = ZeroRule::PlusOne);

// Writes the raw fields in the input schema; values round-trip exactly.
std::string format_dataset(const Dataset& d, const ColumnMap& columns = {});
void write_dataset(const std::filesystem::path& path, const Dataset& d, const ColumnMap& columns = {},
                   std::string_view stamp = {});

std::string format_load_report(const LoadReport& r);

// Fills missing productivity_log with the mean of observed values in the
// unit's group (group = equal values of every key); groups without any
// observed value fall back to the overall mean.
Dataset impute_group_mean(const Dataset& d, std::span<const Field> group_keys,
                          ImputeScale scale = ImputeScale::Log);
std::vector<Field> default_impute_keys();

// ---------------------------------------------------------------------------
// Formulas and design matrices

// A product of fields. A lone categorical is reference coded; categoricals
// inside a term that also contains a numeric field get one column per level.
struct Term {
  std::vector<Field> factors;
  bool operator==(const Term&) const = default;
};

// Intercept plus terms. Text form: "title:working_years + department".
struct Formula {
  std::vector<Term> terms;

  static Formula parse(std::string_view text);
  std::string to_string() const;
  // Returns a copy with `t` as the first term.
  Formula with_leading(Term t) const;
  bool references(Field f) const;
};

struct FactorLevel {
  Field field;
  int level = -1;  // -1 for numeric fields
};

struct ColumnInfo {
  std::string label;
  std::vector<FactorLevel> parents;  // empty for the intercept
};

// Dense n x p matrix; column 0 is always the intercept.
struct DesignMatrix {
  std::vector<ColumnInfo> columns;
  Eigen::MatrixXd values;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const { return columns.size(); }
  std::vector<std::string> labels() const;
  std::optional<std::size_t> find(std::string_view label) const;
  // Appends a column built outside the formula machinery.
  void append(std::string label, const Eigen::VectorXd& column);
};

DesignMatrix build_design(const Dataset& d, const Formula& spec);

std::string column_label(std::span<const FactorLevel> parents);

}  // namespace causalgap
