#include <catch_amalgamated.hpp>

#include <cmath>
#include <string>

#include "causalgap/data_model.hpp"
#include "causalgap/error.hpp"

using namespace causalgap;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

const char* kHeader = "salary,gender,title,university_class,department,working_years,i10_index,has_scholar_id\n";

std::string sample() {
  return std::string(kHeader) +
         "# a comment line\n"
         "120000,0,Full,BM,NS,20,30,1\n"
         "95000,1,Associate,DRUH,SS,11,,0\n"
         "20000,1,Assistant,DUVA,AH,2,1,1\n"
         "80000,1,Assistant,DUVA,AH,3,0,1\r\n"
         "\n"
         "101000.5,0,Associate,BM,TE,9,9,1\n";
}

}  // namespace

TEST_CASE("productivity transform under both zero rules") {
  CHECK(productivity_transform(0.0) == 0.0);
  CHECK_THAT(productivity_transform(9.0), WithinAbs(1.0, 1e-15));
  CHECK(productivity_transform(0.0, ZeroRule::FloorOne) == 0.0);
  CHECK(productivity_transform(1.0, ZeroRule::FloorOne) == 0.0);
  CHECK_THAT(productivity_transform(100.0, ZeroRule::FloorOne), WithinAbs(2.0, 1e-15));
}

TEST_CASE("loading applies the salary floor and derives log columns") {
  const LoadResult r = parse_dataset(sample());
  CHECK(r.report.rows_read == 5);
  CHECK(r.report.dropped_below_floor == 1);
  CHECK(r.report.null_productivity == 1);
  CHECK(r.report.rows_kept == 4);
  const Dataset& d = r.data;
  REQUIRE(d.size() == 4);
  CHECK(d[0].title == Title::Full);
  CHECK(d[1].university_class == UniversityClass::DRUH);
  CHECK(d[2].department == Department::AH);
  CHECK_FALSE(d[1].productivity_raw.has_value());
  CHECK_FALSE(d.productivity_log()[1].has_value());
  CHECK_THAT(d.outcome_log()[0], WithinAbs(std::log10(120000.0), 1e-14));
  CHECK_THAT(*d.productivity_log()[0], WithinAbs(std::log10(31.0), 1e-14));
  CHECK(*d.productivity_log()[2] == 0.0);
  CHECK(d.count_treated() == 2);
  CHECK_FALSE(d.complete());
  CHECK_THROWS_AS(d.require_estimable(), DegenerateError);
}

TEST_CASE("loader reports schema and row problems") {
  CHECK_THROWS_AS(parse_dataset(""), SchemaError);
  CHECK_THROWS_WITH(parse_dataset("salary,gender\n1,0\n"), ContainsSubstring("missing column"));
  const std::string h = kHeader;
  CHECK_THROWS_AS(parse_dataset(h + "100000,2,Full,BM,NS,1,1,1\n"), RowError);
  CHECK_THROWS_AS(parse_dataset(h + "100000,1,Professor,BM,NS,1,1,1\n"), RowError);
  CHECK_THROWS_AS(parse_dataset(h + "100000,1,Full,XX,NS,1,1,1\n"), RowError);
  CHECK_THROWS_AS(parse_dataset(h + "100000,1,Full,BM,NS,-1,1,1\n"), RowError);
  CHECK_THROWS_AS(parse_dataset(h + "100000,1,Full,BM,NS,1,1\n"), RowError);
  CHECK_THROWS_AS(parse_dataset(h + "1000,1,Full,BM,NS,1,1,1\n"), DegenerateError);
  try {
    parse_dataset(h + "100000,1,Full,BM,NS,1,1,1\n100000,1,Full,BM,NS,abc,1,1\n");
    FAIL("expected a row error");
  } catch (const RowError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("custom column names are honoured") {
  ColumnMap c;
  c.salary = "pay";
  c.treatment = "group";
  const std::string text =
      "pay,group,title,university_class,department,working_years,i10_index,has_scholar_id\n"
      "50000,1,Full,BM,NS,4,2,1\n";
  const LoadResult r = parse_dataset(text, c, 0.0);
  CHECK(r.data[0].outcome_raw == 50000.0);
  CHECK(r.data[0].treatment == 1);
}

TEST_CASE("format and parse round-trip exactly") {
  const Dataset d = parse_dataset(sample()).data;
  const Dataset back = parse_dataset(format_dataset(d)).data;
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(back[i] == d[i]);
}

TEST_CASE("group-mean imputation matches a hand computation") {
  std::vector<UnitRecord> rs(5);
  for (auto& r : rs) {
    r.outcome_raw = 1000.0;
    r.department = Department::NS;
    r.title = Title::Full;
  }
  rs[0].productivity_raw = 9.0;   // log 1
  rs[1].productivity_raw = 99.0;  // log 2
  rs[2].productivity_raw = std::nullopt;
  rs[3].department = Department::B;
  rs[3].productivity_raw = std::nullopt;  // no donor in its group
  rs[4].department = Department::SS;
  rs[4].productivity_raw = 999.0;  // log 3
  rs[0].treatment = rs[1].treatment = rs[2].treatment = 1;
  const Dataset d = Dataset::from_records(rs);
  const std::vector<Field> keys{Field::Department};
  const Dataset a = impute_group_mean(d, keys);
  CHECK_THAT(*a.productivity_log()[2], WithinAbs(1.5, 1e-14));
  CHECK_THAT(*a.productivity_log()[3], WithinAbs(2.0, 1e-14));
  CHECK(a.imputed()[2]);
  CHECK_FALSE(a.imputed()[0]);
  CHECK(a.complete());
  const Dataset raw = impute_group_mean(d, keys, ImputeScale::Raw);
  CHECK_THAT(*raw.productivity_log()[2], WithinAbs(std::log10(55.0), 1e-14));
  CHECK_THROWS_AS(impute_group_mean(d, std::vector<Field>{}), SpecError);
  CHECK_THROWS_AS(impute_group_mean(d, std::vector<Field>{Field::ProductivityLog}), SpecError);

  for (auto& r : rs) r.productivity_raw.reset();
  CHECK_THROWS_AS(impute_group_mean(Dataset::from_records(rs), keys), DegenerateError);
}

TEST_CASE("formula parsing and printing") {
  const Formula f = Formula::parse("title + university_class:department:productivity_log + 1");
  REQUIRE(f.terms.size() == 2);
  CHECK(f.terms[1].factors.size() == 3);
  CHECK(f.to_string() == "1 + title + university_class:department:productivity_log");
  CHECK(f.references(Field::Department));
  CHECK_FALSE(f.references(Field::WorkingYears));
  CHECK(Formula::parse("").terms.empty());
  CHECK_THROWS_AS(Formula::parse("title + + department"), SpecError);
  CHECK_THROWS_AS(Formula::parse("title:title"), SpecError);
  CHECK_THROWS_AS(Formula::parse("salary"), SpecError);
}

TEST_CASE("design matrix coding") {
  const Dataset d = parse_dataset(sample(), {}, 0.0).data;
  const Dataset full = impute_group_mean(d, default_impute_keys());
  const DesignMatrix X = build_design(full, Formula::parse("title + title:working_years + department:productivity_log"));
  // intercept, 2 title dummies, 3 title slopes, 6 department slopes
  REQUIRE(X.cols() == 12);
  CHECK(X.columns[1].label == "title[Associate]");
  CHECK(X.columns[3].label == "title[Assistant]:working_years");
  CHECK(X.find("department[NS]:productivity_log").has_value());
  for (std::size_t i = 0; i < full.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    CHECK(X.values(r, 0) == 1.0);
    CHECK(X.values(r, 2) == (full[i].title == Title::Full ? 1.0 : 0.0));
    const double slope = X.values(r, 3) + X.values(r, 4) + X.values(r, 5);
    CHECK(slope == full[i].working_years);
    double prod = 0.0;
    for (Eigen::Index j = 6; j < 12; ++j) prod += X.values(r, j);
    CHECK(prod == *full.productivity_log()[i]);
  }
  CHECK_THROWS_AS(build_design(full, Formula::parse("title + title")), SpecError);
  CHECK_THROWS_AS(build_design(d, Formula::parse("productivity_log")), DegenerateError);
}
