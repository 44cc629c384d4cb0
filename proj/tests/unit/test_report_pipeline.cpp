#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "causalgap/error.hpp"
#include "causalgap/pipeline.hpp"
#include "causalgap/report.hpp"

using namespace causalgap;
namespace fs = std::filesystem;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("causalgap_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "run.ini";
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

const char* kSmallConfig =
    "; small end-to-end run\n"
    "[run]\n"
    "seed = 5\n"
    "[simulate]\n"
    "n = 600\n"
    "# comments with either marker\n"
    "[forest]\n"
    "trees = 100\n"
    "group_by = working_years, title\n"
    "[sensitivity]\n"
    "grid = 10\n";

}  // namespace

TEST_CASE("coefficient to percent-gap conversion anchors") {
  const std::pair<double, double> anchors[] = {{-0.0321, 7.12}, {-0.0289, 6.44}, {-0.0297, 6.61}, {-0.0276, 6.17},
                                               {-0.0290, 6.45}, {-0.0267, 5.96}, {-0.0398, 8.76}, {-0.0245, 5.49}};
  for (const auto& [beta, pct] : anchors) CHECK_THAT(beta_to_gap_percent(beta), WithinAbs(pct, 0.01));
  CHECK(beta_to_gap_percent(0.0) == 0.0);
  const GapInterval g = gap_interval(-0.0398, -0.0245);
  CHECK(g.lo < g.hi);
  CHECK_THAT(g.lo, WithinAbs(5.49, 0.01));
  CHECK_THAT(g.hi, WithinAbs(8.76, 0.01));
}

TEST_CASE("unadjusted gap") {
  CHECK_THAT(unadjusted_gap(134169, 118460), WithinAbs(11.71, 0.01));
  CHECK_THAT(unadjusted_gap(100000, 90000), WithinAbs(10.0, 1e-12));
  CHECK(unadjusted_gap(5, 5) == 0.0);
  CHECK_THROWS_AS(unadjusted_gap(0, 5), DegenerateError);
}

TEST_CASE("summary rows are ordered and derive percents from beta") {
  std::map<Method, EffectEstimate> est;
  est[Method::Forest] = make_effect(Method::Forest, Estimand::OverlapAte, -0.0267, 0.004);
  est[Method::Ols] = make_effect(Method::Ols, Estimand::Ate, -0.0321, 0.004, 100);
  est[Method::Psm] = make_effect(Method::Psm, Estimand::Att, -0.0276, 0.006, 90);
  const SummaryTable t = build_summary(ArmMeans{134169, 118460}, est, {{Estimand::Ate, -0.03}});
  REQUIRE(t.rows.size() == 4);
  CHECK(t.rows[0].label == "Unadjusted");
  CHECK(t.rows[1].label == "OLS");
  CHECK(t.rows[2].label == "PSM");
  CHECK(t.rows[3].label == "FOREST");
  CHECK(*t.rows[1].within_2se());
  CHECK_FALSE(t.rows[2].within_2se().has_value());
  for (const SummaryRow& r : t.rows) {
    if (!r.effect) continue;
    CHECK(r.gap_percent() == beta_to_gap_percent(r.effect->beta));
    CHECK(r.gap_ci()->lo == beta_to_gap_percent(r.effect->ci_hi));
    CHECK(r.gap_ci()->hi == beta_to_gap_percent(r.effect->ci_lo));
  }

  // Round trip through the CSV: percent columns equal the conversion of beta columns.
  std::istringstream csv(format_summary_csv(t));
  std::string line;
  std::getline(csv, line);
  int rows = 0;
  while (std::getline(csv, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    ++rows;
    if (cells[2].empty()) continue;
    CHECK(std::stod(cells[6]) == Catch::Approx(beta_to_gap_percent(std::stod(cells[2]))).epsilon(1e-14));
    CHECK(std::stod(cells[7]) == Catch::Approx(beta_to_gap_percent(std::stod(cells[5]))).epsilon(1e-14));
    CHECK(std::stod(cells[8]) == Catch::Approx(beta_to_gap_percent(std::stod(cells[4]))).epsilon(1e-14));
  }
  CHECK(rows == 4);
  const std::string text = format_summary_text(t);
  CHECK(text.find("11.71") != std::string::npos);
  CHECK(text.find("7.12") != std::string::npos);
}

TEST_CASE("estimate store round-trips") {
  EstimateStore s;
  s.means = ArmMeans{123456.78, 100000.5};
  s.estimates[Method::Iptw] = make_effect(Method::Iptw, Estimand::Ate, -0.0301234567891234, 0.00512345, 3990);
  s.estimates[Method::Forest] = make_effect(Method::Forest, Estimand::OverlapAte, -0.02, 0.004);
  const EstimateStore back = parse_estimates_csv(format_estimates_csv(s));
  REQUIRE(back.means.has_value());
  CHECK(back.means->control == s.means->control);
  REQUIRE(back.estimates.size() == 2);
  const EffectEstimate& e = back.estimates.at(Method::Iptw);
  CHECK(e.beta == s.estimates[Method::Iptw].beta);
  CHECK(e.ci_lo == s.estimates[Method::Iptw].ci_lo);
  CHECK(e.dof == 3990);
  CHECK(back.estimates.at(Method::Forest).dof == -1);
  CHECK(parse_estimates_csv("").empty());
  CHECK_THROWS_AS(parse_estimates_csv("a,b\n"), SchemaError);
}

TEST_CASE("config parsing and validation") {
  const Config c = Config::parse(
      "[run]\nseed = 7\n; note\n[forest]\ntrees=12\ntune_mtry = yes\ngroup_by = title , department,\n"
      "[simulate]\nnoise_sd = 0.25\n[input]\npath = data/x.csv\n",
      "/base");
  CHECK(c.get_int("run", "seed", 0) == 7);
  CHECK(c.get_int("forest", "trees", 0) == 12);
  CHECK(c.get_bool("forest", "tune_mtry", false));
  CHECK(c.get_double("simulate", "noise_sd", 0.0) == 0.25);
  CHECK(c.get_double("simulate", "tau", -1.5) == -1.5);
  CHECK(c.get_list("forest", "group_by", {}) == std::vector<std::string>{"title", "department"});
  CHECK(c.resolve(c.get_string("input", "path", "")) == fs::path("/base/data/x.csv"));
  CHECK(c.resolve("/abs.csv") == fs::path("/abs.csv"));
  CHECK(c.sha256().size() == 64);

  CHECK_THROWS_WITH(Config::parse("[nope]\na = 1\n"), ContainsSubstring("unknown config section"));
  CHECK_THROWS_WITH(Config::parse("[run]\nsed = 1\n"), ContainsSubstring("unknown config key"));
  CHECK_THROWS_WITH(Config::parse("seed = 1\n"), ContainsSubstring("outside any section"));
  CHECK_THROWS_AS(Config::parse("[run]\nseed\n"), SpecError);
  CHECK_THROWS_AS(Config::parse("[run]\nseed = 1\nseed = 2\n"), SpecError);
  CHECK_THROWS_AS(Config::parse("[run]\nseed = x\n").get_int("run", "seed", 0), SpecError);
  CHECK_THROWS_AS(Config::parse("[forest]\ntune_mtry = maybe\n").get_bool("forest", "tune_mtry", false), SpecError);
}

TEST_CASE("SHA-256 known answers") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("stage lists are validated and put in pipeline order") {
  CHECK(parse_stage_list("report, ols,simulate") == std::vector<std::string>{"simulate", "ols", "report"});
  CHECK(parse_stage_list("all") == pipeline_stages());
  CHECK_THROWS_AS(parse_stage_list("ols,bogus"), SpecError);
  CHECK_THROWS_AS(parse_stage_list(" , "), SpecError);
}

TEST_CASE("pipeline runs are byte-identical and stamped") {
  const fs::path root = fresh_dir("determinism");
  const fs::path cfg = write_config(root, kSmallConfig);
  std::vector<fs::path> dirs{root / "a", root / "b"};
  RunResult last;
  for (const fs::path& d : dirs) {
    RunOptions o;
    o.config_path = cfg;
    o.out_dir = d;
    last = run_pipeline(o);
  }
  REQUIRE(last.summary.has_value());
  CHECK(last.summary->rows.size() == 7);
  CHECK(last.seed == 5);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(dirs[0])) {
    const std::string name = entry.path().filename().string();
    INFO(name);
    const std::string a = slurp(entry.path());
    CHECK(a == slurp(dirs[1] / name));
    if (name != "run_manifest.json") {
      CHECK(a.rfind("# config_sha256=" + last.config_sha256 + " seed=5\n", 0) == 0);
    }
    ++files;
  }
  for (const char* required : {"summary.csv", "balance.csv", "love_plot.csv", "overlap_hist.csv", "ite.csv",
                               "ite_by_group.csv", "contours.csv", "run_manifest.json"}) {
    CHECK(fs::exists(dirs[0] / required));
  }
  CHECK(files == last.artifacts.size() + 1);
  const std::string manifest = slurp(dirs[0] / "run_manifest.json");
  CHECK(manifest.find("\"config_sha256\": \"" + last.config_sha256 + "\"") != std::string::npos);
  CHECK(manifest.find("\"eigen\"") != std::string::npos);

  // Report alone reuses stored estimates when the stamp matches.
  RunOptions again;
  again.config_path = cfg;
  again.out_dir = dirs[0];
  again.stages = std::vector<std::string>{"report"};
  const RunResult r = run_pipeline(again);
  REQUIRE(r.summary.has_value());
  CHECK(slurp(dirs[0] / "summary.csv") == slurp(dirs[1] / "summary.csv"));

  // A different seed does not pick up those estimates.
  again.seed = 6;
  CHECK_THROWS_WITH(run_pipeline(again), "report: no inputs");
}

TEST_CASE("report without estimates fails with the stage name") {
  const fs::path dir = fresh_dir("no_inputs");
  RunOptions o;
  o.out_dir = dir;
  o.stages = std::vector<std::string>{"report"};
  try {
    run_pipeline(o);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "report");
    CHECK(std::string(e.what()) == "report: no inputs");
  }
  const std::string manifest = slurp(dir / "run_manifest.json");
  CHECK(manifest.find("\"failed_stage\": \"report\"") != std::string::npos);
}

TEST_CASE("a failing stage keeps the artifacts of earlier stages") {
  const fs::path root = fresh_dir("partial");
  const fs::path cfg = write_config(root, "[simulate]\nn = 300\n[ols]\nspec = title + salary\n");
  RunOptions o;
  o.config_path = cfg;
  o.out_dir = root / "out";
  o.stages = std::vector<std::string>{"simulate", "ols", "report"};
  CHECK_THROWS_WITH(run_pipeline(o), ContainsSubstring("ols: unknown field 'salary'"));
  CHECK(fs::exists(root / "out" / "data.csv"));
  CHECK(fs::exists(root / "out" / "truth.csv"));
  CHECK_FALSE(fs::exists(root / "out" / "summary.csv"));
  const std::string manifest = slurp(root / "out" / "run_manifest.json");
  CHECK(manifest.find("\"failed_stage\": \"ols\"") != std::string::npos);
}

TEST_CASE("ingest reads an external file with missing productivity") {
  const fs::path root = fresh_dir("ingest");
  {
    std::ofstream f(root / "units.csv");
    f << "pay,female,title,university_class,department,working_years,i10,scholar\n";
    const char* titles[] = {"Assistant", "Associate", "Full"};
    const char* depts[] = {"AH", "B", "MHS", "NS", "SS", "TE"};
    for (int i = 0; i < 200; ++i) {
      const int z = i % 2;
      const double years = 1 + (i * 7) % 30;
      const std::string prod = i % 11 == 0 ? "" : std::to_string((i * 13) % 40);
      f << 60000 + 1500 * years - 3000 * z + (i * 37) % 5000 << ',' << z << ',' << titles[i % 3] << ','
        << (i % 5 < 2 ? "BM" : "DUVA") << ',' << depts[(i / 3) % 6] << ',' << years << ',' << prod << ','
        << (prod.empty() ? 0 : 1) << '\n';
    }
    f << "20000,0,Full,BM,NS,3,4,1\n";
  }
  const fs::path cfg = write_config(root,
                                    "[input]\npath = units.csv\nsalary_floor = 27000\ncol_salary = pay\n"
                                    "col_treatment = female\ncol_productivity = i10\ncol_has_profile = scholar\n"
                                    "[impute]\nkeys = treatment, title\n");
  RunOptions o;
  o.config_path = cfg;
  o.out_dir = root / "out";
  o.stages = std::vector<std::string>{"ingest", "impute", "ols", "report"};
  const RunResult r = run_pipeline(o);
  const std::string load = slurp(root / "out" / "load_report.txt");
  CHECK(load.find("rows_read: 201") != std::string::npos);
  CHECK(load.find("dropped: 1") != std::string::npos);
  CHECK(slurp(root / "out" / "impute_report.txt").find("imputed: 19") != std::string::npos);
  REQUIRE(r.summary.has_value());
  CHECK(r.summary->rows.size() == 2);
  CHECK_FALSE(r.summary->rows[1].truth.has_value());
}
