#include "causalgap/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <boost/version.hpp>
#include <Eigen/Core>
#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>
#include <openssl/opensslv.h>

#include "causalgap/balance.hpp"
#include "causalgap/error.hpp"
#include "causalgap/forest.hpp"
#include "causalgap/kernels.hpp"
#include "causalgap/sensitivity.hpp"
#include "causalgap/simulate.hpp"
#include "csv.hpp"

#ifndef CAUSALGAP_VERSION
#define CAUSALGAP_VERSION "unknown"
#endif

namespace causalgap {

namespace {

using KeyTable = std::map<std::string_view, std::set<std::string_view>>;

const KeyTable& known_keys() {
  static const KeyTable table{
      {"run", {"seed", "stages", "threads"}},
      {"input",
       {"path", "salary_floor", "zero_rule", "col_salary", "col_treatment", "col_title", "col_university_class",
        "col_department", "col_working_years", "col_productivity", "col_has_profile"}},
      {"simulate",
       {"n", "effect", "tau", "effect_b", "effect_threshold", "effect_department", "noise_sd", "profile_prob",
        "confounding"}},
      {"impute", {"keys", "scale"}},
      {"ols", {"spec", "se"}},
      {"ols-interact", {"spec", "se"}},
      {"ps", {"spec", "band_lo", "band_hi", "fail_threshold", "bins"}},
      {"match", {"caliper", "outcome_spec", "se"}},
      {"iptw", {"outcome_spec", "truncate", "se"}},
      {"ps-adjust", {}},
      {"forest",
       {"trees", "min_node_size", "subsample_fraction", "mtry", "honesty_fraction", "folds", "seed", "tune_mtry",
        "tuning_trees", "outcome_uses_profile", "group_by", "threads"}},
      {"balance", {"adjustment"}},
      {"sensitivity", {"spec", "alpha", "q", "benchmarks", "grid", "max"}},
      {"report", {}},
  };
  return table;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  std::string out;
  out.reserve(2 * len);
  for (unsigned int k = 0; k < len; ++k) out += fmt::format("{:02x}", md[k]);
  return out;
}

Config Config::parse(std::string_view text, std::filesystem::path base_dir) {
  boost::property_tree::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw SpecError(fmt::format("config line {}: {}", e.line(), e.message()));
  }
  Config c;
  const KeyTable& keys = known_keys();
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw SpecError(fmt::format("config key '{}' lies outside any section", section));
    const auto sec = keys.find(section);
    if (sec == keys.end()) throw SpecError(fmt::format("unknown config section [{}]", section));
    auto& dest = c.values_[section];
    for (const auto& [key, value] : body) {
      if (!sec->second.contains(key)) throw SpecError(fmt::format("unknown config key [{}] {}", section, key));
      dest[key] = trim(value.data());
    }
  }
  c.base_dir_ = std::move(base_dir);
  c.sha256_ = sha256_hex(text);
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open config '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.parent_path());
}

bool Config::has(std::string_view section, std::string_view key) const {
  const auto s = values_.find(section);
  return s != values_.end() && s->second.find(key) != s->second.end();
}

std::string Config::get_string(std::string_view section, std::string_view key, std::string_view fallback) const {
  const auto s = values_.find(section);
  if (s == values_.end()) return std::string(fallback);
  const auto k = s->second.find(key);
  return k == s->second.end() ? std::string(fallback) : k->second;
}

double Config::get_double(std::string_view section, std::string_view key, double fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get_string(section, key, "");
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw SpecError(fmt::format("config [{}] {}: '{}' is not a number", section, key, v));
  }
  return out;
}

long long Config::get_int(std::string_view section, std::string_view key, long long fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get_string(section, key, "");
  long long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw SpecError(fmt::format("config [{}] {}: '{}' is not an integer", section, key, v));
  }
  return out;
}

bool Config::get_bool(std::string_view section, std::string_view key, bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get_string(section, key, "");
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw SpecError(fmt::format("config [{}] {}: '{}' is not a boolean", section, key, v));
}

std::vector<std::string> Config::get_list(std::string_view section, std::string_view key,
                                          std::vector<std::string> fallback) const {
  if (!has(section, key)) return fallback;
  std::vector<std::string> out;
  std::string_view rest = values_.find(section)->second.find(key)->second;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    std::string item = trim(rest.substr(0, comma));
    if (!item.empty()) out.push_back(std::move(item));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

std::filesystem::path Config::resolve(const std::filesystem::path& p) const {
  if (p.is_absolute() || base_dir_.empty()) return p;
  return base_dir_ / p;
}

const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> stages{"simulate", "ingest",   "impute",    "ols",
                                               "ols-interact", "ps",   "match",     "iptw",
                                               "ps-adjust", "forest",  "balance",   "sensitivity",
                                               "report"};
  return stages;
}

std::vector<std::string> parse_stage_list(std::string_view text) {
  std::set<std::size_t> picked;
  const auto& all = pipeline_stages();
  std::string_view rest = text;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string item = trim(rest.substr(0, comma));
    if (!item.empty()) {
      if (item == "all") {
        for (std::size_t k = 0; k < all.size(); ++k) picked.insert(k);
      } else {
        const auto it = std::find(all.begin(), all.end(), item);
        if (it == all.end()) throw SpecError(fmt::format("unknown stage '{}'", item));
        picked.insert(static_cast<std::size_t>(it - all.begin()));
      }
    }
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  if (picked.empty()) throw SpecError("stage list is empty");
  std::vector<std::string> out;
  for (std::size_t k : picked) out.push_back(all[k]);
  return out;
}

namespace {

template <class T>
T parse_choice(const Config& c, std::string_view section, std::string_view key, std::string_view fallback,
               std::initializer_list<std::pair<std::string_view, T>> choices) {
  const std::string v = c.get_string(section, key, fallback);
  for (const auto& [name, value] : choices) {
    if (name == v) return value;
  }
  throw SpecError(fmt::format("config [{}] {}: unknown value '{}'", section, key, v));
}

Formula formula_or(const Config& c, std::string_view section, std::string_view key, const Formula& fallback) {
  if (!c.has(section, key)) return fallback;
  return Formula::parse(c.get_string(section, key, ""));
}

std::vector<Field> field_list(const Config& c, std::string_view section, std::string_view key,
                              std::vector<std::string> fallback) {
  std::vector<Field> out;
  for (const std::string& name : c.get_list(section, key, std::move(fallback))) out.push_back(parse_field(name));
  return out;
}

SeKind se_kind(const Config& c, std::string_view section, std::string_view fallback) {
  return parse_choice<SeKind>(c, section, "se", fallback, {{"classical", SeKind::Classical}, {"hc1", SeKind::HC1}});
}

std::string format_truth_csv(const Truth& t) {
  return fmt::format("estimand,value\nATE,{}\nATT,{}\nOVERLAP_ATE,{}\n", t.ate, t.att, t.overlap_ate);
}

std::string format_truth_ite_csv(const Truth& t) {
  std::string out = "unit_id,tau,score\n";
  for (std::size_t i = 0; i < t.tau.size(); ++i) out += fmt::format("{},{},{}\n", i, t.tau[i], t.score[i]);
  return out;
}

std::map<Estimand, double> parse_truth_csv(std::string_view text) {
  detail::CsvReader reader(text);
  std::vector<std::string> cells;
  std::map<Estimand, double> out;
  if (!reader.next(cells)) return out;
  while (reader.next(cells)) {
    if (cells.size() != 2) throw RowError(reader.line(), "expected 2 fields");
    double v = 0.0;
    const auto [p, ec] = std::from_chars(cells[1].data(), cells[1].data() + cells[1].size(), v);
    if (ec != std::errc() || p != cells[1].data() + cells[1].size()) {
      throw RowError(reader.line(), fmt::format("'{}' is not a number", cells[1]));
    }
    out[parse_estimand(cells[0])] = v;
  }
  return out;
}

std::string format_propensity_summary(const PropensityFit& p, const OverlapReport& r) {
  std::string out;
  out += fmt::format("spec: {}\n", p.spec_label);
  out += fmt::format("converged: {}\n", p.model.converged);
  out += fmt::format("iterations: {}\n", p.model.iterations);
  out += fmt::format("separation: {}\n", p.model.separation);
  out += fmt::format("treated_range: {} {}\n", r.min_treated, r.max_treated);
  out += fmt::format("control_range: {} {}\n", r.min_control, r.max_control);
  out += fmt::format("band: {} {}\n", r.band.lo, r.band.hi);
  out += fmt::format("outside_treated: {}\noutside_control: {}\n", r.outside_treated, r.outside_control);
  out += fmt::format("fail_fraction: {}\nfail_threshold: {}\npassed: {}\n", r.fail_fraction, r.fail_threshold,
                     r.passed);
  return out;
}

std::string format_forest_summary(const CausalForest& f, const CateVector& cate, const OverlapAteResult& r) {
  std::string out;
  out += fmt::format("trees: {}\nmtry: {}\nmin_node_size: {}\n", f.trees.size(), f.hyper.mtry, f.hyper.min_node_size);
  out += fmt::format("subsample_fraction: {}\nhonesty_fraction: {}\n", f.hyper.subsample_fraction,
                     f.hyper.honesty_fraction);
  out += fmt::format("folds: {}\n", f.nuisance.fold_count);
  out += fmt::format("overlap_ate: {}\nse: {}\nci: {} {}\n", r.estimate.beta, r.estimate.se, r.estimate.ci_lo,
                     r.estimate.ci_hi);
  out += fmt::format("excluded: {}\n", r.excluded);
  out += fmt::format("cate_defined: {}\ncate_mean: {}\ncate_sd: {}\ncate_min: {}\ncate_max: {}\n",
                     cate.summary.defined, cate.summary.mean, cate.summary.sd, cate.summary.min, cate.summary.max);
  return out;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// True when the file exists and its first line is the given stamp line.
bool stamped_with(const std::filesystem::path& p, const std::string& stamp_line) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return false;
  std::string first;
  std::getline(in, first);
  return first == stamp_line;
}

class Runner {
 public:
  Runner(const RunOptions& opt, Config config, std::uint64_t seed)
      : opt_(opt), cfg_(std::move(config)), seed_(seed) {
    stamp_line_ = fmt::format("# config_sha256={} seed={}", cfg_.sha256(), seed_);
    columns_.salary = cfg_.get_string("input", "col_salary", columns_.salary);
    columns_.treatment = cfg_.get_string("input", "col_treatment", columns_.treatment);
    columns_.title = cfg_.get_string("input", "col_title", columns_.title);
    columns_.university_class = cfg_.get_string("input", "col_university_class", columns_.university_class);
    columns_.department = cfg_.get_string("input", "col_department", columns_.department);
    columns_.working_years = cfg_.get_string("input", "col_working_years", columns_.working_years);
    columns_.productivity = cfg_.get_string("input", "col_productivity", columns_.productivity);
    columns_.has_profile = cfg_.get_string("input", "col_has_profile", columns_.has_profile);
    rule_ = parse_choice<ZeroRule>(cfg_, "input", "zero_rule", "plus_one",
                                   {{"plus_one", ZeroRule::PlusOne}, {"floor_one", ZeroRule::FloorOne}});
    if (stamped_with(path("estimates.csv"), stamp_line_)) store_ = parse_estimates_csv(read_file(path("estimates.csv")));
    if (!cfg_.has("input", "path") && stamped_with(path("truth.csv"), stamp_line_)) {
      truth_ = parse_truth_csv(read_file(path("truth.csv")));
    }
  }

  void run(const std::string& stage) {
    if (stage == "simulate") simulate();
    else if (stage == "ingest") ingest();
    else if (stage == "impute") impute();
    else if (stage == "ols") ols(Method::Ols, "ols", default_baseline_spec());
    else if (stage == "ols-interact") ols(Method::OlsInteract, "ols-interact", default_ps_spec());
    else if (stage == "ps") propensity_stage();
    else if (stage == "match") match_stage();
    else if (stage == "iptw") iptw_stage();
    else if (stage == "ps-adjust") ps_adjust_stage();
    else if (stage == "forest") forest_stage();
    else if (stage == "balance") balance_stage();
    else if (stage == "sensitivity") sensitivity_stage();
    else if (stage == "report") report_stage();
    else throw SpecError(fmt::format("unknown stage '{}'", stage));
  }

  std::vector<std::string> artifacts() const { return {written_.begin(), written_.end()}; }
  std::optional<SummaryTable> summary() const { return summary_; }

 private:
  std::filesystem::path path(std::string_view name) const { return opt_.out_dir / std::string(name); }

  void write(const std::string& name, std::string_view content) {
    std::ofstream out(path(name), std::ios::binary);
    if (!out) throw Error(fmt::format("cannot write '{}'", path(name).string()));
    out << stamp_line_ << '\n' << content;
    if (!out) throw Error(fmt::format("write to '{}' failed", path(name).string()));
    written_.insert(name);
  }

  void log(std::string_view msg) {
    if (opt_.log) *opt_.log << msg << '\n';
  }

  std::optional<std::filesystem::path> input_path() const {
    if (cfg_.has("input", "path")) return cfg_.resolve(cfg_.get_string("input", "path", ""));
    if (std::filesystem::exists(path("data.csv"))) return path("data.csv");
    return std::nullopt;
  }

  void set_data(Dataset d) {
    double sum[2] = {0.0, 0.0};
    std::size_t count[2] = {0, 0};
    for (const UnitRecord& r : d.records()) {
      sum[r.treatment] += r.outcome_raw;
      ++count[r.treatment];
    }
    if (count[0] > 0 && count[1] > 0) {
      store_.means = ArmMeans{sum[0] / static_cast<double>(count[0]), sum[1] / static_cast<double>(count[1])};
    }
    data_ = std::move(d);
    propensity_.reset();
    match_.reset();
  }

  LoadResult load() {
    const auto p = input_path();
    if (!p) throw Error("no input data: set [input] path or run the simulate stage first");
    return load_dataset(*p, columns_, cfg_.get_double("input", "salary_floor", 27000.0), rule_);
  }

  const Dataset& data() {
    if (!data_) set_data(load().data);
    return *data_;
  }

  Dataset imputed(const Dataset& d) const {
    const std::vector<Field> keys =
        field_list(cfg_, "impute", "keys", {"treatment", "department", "title"});
    const ImputeScale scale =
        parse_choice<ImputeScale>(cfg_, "impute", "scale", "log", {{"log", ImputeScale::Log}, {"raw", ImputeScale::Raw}});
    return impute_group_mean(d, keys, scale);
  }

  // Data with every productivity value present, imputing if needed.
  const Dataset& complete_data() {
    if (!data().complete()) {
      log("imputing missing productivity before estimation");
      set_data(imputed(*data_));
    }
    return *data_;
  }

  const PropensityFit& propensity() {
    if (!propensity_) {
      const Formula spec = formula_or(cfg_, "ps", "spec", default_ps_spec());
      propensity_ = estimate_propensity(complete_data(), spec);
    }
    return *propensity_;
  }

  const MatchResult& matches() {
    if (!match_) match_ = match_nn(propensity(), cfg_.get_double("match", "caliper", 0.2));
    return *match_;
  }

  std::optional<double> truncation() const {
    if (!cfg_.has("iptw", "truncate")) return std::nullopt;
    return cfg_.get_double("iptw", "truncate", 0.0);
  }

  void save_estimates() { write("estimates.csv", format_estimates_csv(store_)); }

  void record(const EffectEstimate& e) {
    store_.estimates[e.method] = e;
    save_estimates();
    log(fmt::format("{}: {} = {:.5f} (se {:.5f})", method_name(e.method), estimand_name(e.estimand), e.beta, e.se));
  }

  void simulate() {
    DgpSpec spec = DgpSpec::canonical();
    spec.seed = seed_;
    const long long n = cfg_.get_int("simulate", "n", 4000);
    if (n < 0) throw SpecError("[simulate] n must be nonnegative");
    spec.n = static_cast<std::size_t>(n);
    spec.effect.kind = parse_effect_kind(cfg_.get_string("simulate", "effect", "constant"));
    spec.effect.a = cfg_.get_double("simulate", "tau", spec.effect.a);
    spec.effect.b = cfg_.get_double("simulate", "effect_b", spec.effect.b);
    spec.effect.threshold = cfg_.get_double("simulate", "effect_threshold", spec.effect.threshold);
    if (cfg_.has("simulate", "effect_department")) {
      spec.effect.department =
          static_cast<Department>(data_level(Field::Department, cfg_.get_string("simulate", "effect_department", "")));
    }
    spec.noise_sd = cfg_.get_double("simulate", "noise_sd", spec.noise_sd);
    spec.profile_prob = cfg_.get_double("simulate", "profile_prob", spec.profile_prob);
    const double k = cfg_.get_double("simulate", "confounding", 1.0);
    for (double& v : spec.treatment.years_by_title) v *= k;
    for (auto& row : spec.treatment.productivity_by_cell) {
      for (double& v : row) v *= k;
    }
    Simulation sim = generate(spec);
    write_dataset(path("data.csv"), sim.data, columns_, stamp_line_.substr(2));
    written_.insert("data.csv");
    write("truth.csv", format_truth_csv(sim.truth));
    write("truth_ite.csv", format_truth_ite_csv(sim.truth));
    truth_ = {{Estimand::Ate, sim.truth.ate}, {Estimand::Att, sim.truth.att},
              {Estimand::OverlapAte, sim.truth.overlap_ate}};
    log(fmt::format("simulated {} units, {} treated", sim.data.size(), sim.data.count_treated()));
    set_data(std::move(sim.data));
  }

  static int data_level(Field f, std::string_view name) {
    const auto levels = field_levels(f);
    for (std::size_t k = 0; k < levels.size(); ++k) {
      if (levels[k] == name) return static_cast<int>(k);
    }
    throw SpecError(fmt::format("'{}' is not a level of {}", name, field_name(f)));
  }

  void ingest() {
    LoadResult r = load();
    write("load_report.txt", format_load_report(r.report));
    log(fmt::format("loaded {} rows, kept {}", r.report.rows_read, r.report.rows_kept));
    set_data(std::move(r.data));
  }

  void impute() {
    const Dataset& d = data();
    const std::size_t missing =
        static_cast<std::size_t>(std::count(d.productivity_log().begin(), d.productivity_log().end(), std::nullopt));
    if (missing > 0) set_data(imputed(d));
    write("impute_report.txt", fmt::format("imputed: {}\n", missing));
  }

  void ols(Method m, std::string_view section, const Formula& fallback) {
    OlsOptions options;
    options.se = se_kind(cfg_, section, "classical");
    record(estimate_regression(complete_data(), formula_or(cfg_, section, "spec", fallback), m, options));
  }

  void propensity_stage() {
    const PropensityFit& p = propensity();
    const OverlapBand band{cfg_.get_double("ps", "band_lo", 0.05), cfg_.get_double("ps", "band_hi", 0.95)};
    const OverlapReport r = positivity_check(p, band, cfg_.get_double("ps", "fail_threshold", 0.1),
                                             static_cast<int>(cfg_.get_int("ps", "bins", 40)));
    write("overlap_hist.csv", format_overlap_csv(r));
    write("propensity.txt", format_propensity_summary(p, r));
    if (!r.passed) log(fmt::format("warning: {:.1f}% of units fall outside the overlap band", 100.0 * r.fail_fraction));
    if (p.model.separation) log("warning: the propensity model shows separation");
  }

  void match_stage() {
    const MatchResult& m = matches();
    write("matches.csv", format_matches_csv(m));
    const MatchedSe se = parse_choice<MatchedSe>(cfg_, "match", "se", "unit_robust",
                                                 {{"classical", MatchedSe::Classical},
                                                  {"unit_robust", MatchedSe::UnitRobust},
                                                  {"pair_cluster", MatchedSe::PairCluster}});
    if (m.unmatched_treated > 0) log(fmt::format("{} treated units found no match", m.unmatched_treated));
    record(att_psm(complete_data(), m, formula_or(cfg_, "match", "outcome_spec", default_ps_spec()), se));
  }

  void iptw_stage() {
    const PropensityFit& p = propensity();
    record(ate_iptw(complete_data(), p, formula_or(cfg_, "iptw", "outcome_spec", default_ps_spec()), truncation(),
                    se_kind(cfg_, "iptw", "hc1")));
  }

  void ps_adjust_stage() {
    const PropensityFit& p = propensity();
    record(ate_ps_adjust(complete_data(), p));
  }

  void forest_stage() {
    const Dataset& d = complete_data();
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg_.get_int("forest", "seed", static_cast<long long>(seed_)));
    ForestHyper h;
    h.num_trees = static_cast<int>(cfg_.get_int("forest", "trees", h.num_trees));
    h.min_node_size = static_cast<int>(cfg_.get_int("forest", "min_node_size", h.min_node_size));
    h.subsample_fraction = cfg_.get_double("forest", "subsample_fraction", h.subsample_fraction);
    h.mtry = static_cast<int>(cfg_.get_int("forest", "mtry", h.mtry));
    h.honesty_fraction = cfg_.get_double("forest", "honesty_fraction", h.honesty_fraction);
    h.threads = static_cast<int>(cfg_.get_int("forest", "threads", cfg_.get_int("run", "threads", 0)));
    if (h.num_trees < 1) throw SpecError("[forest] trees must be positive");
    const int folds = static_cast<int>(cfg_.get_int("forest", "folds", 5));

    const NuisanceDesigns designs =
        default_nuisance_designs(d, cfg_.get_bool("forest", "outcome_uses_profile", false));
    const NuisanceFit nuisance = fit_nuisances(d, designs, folds, seed);
    ForestCovariates cov = forest_covariates(d);
    ForestData fd = make_forest_data(std::move(cov.x), std::move(cov.labels), d.outcome_log(), d.treatment(), nuisance);
    if (cfg_.get_bool("forest", "tune_mtry", false)) {
      h.mtry = tune_mtry(fd, nuisance, h, seed, static_cast<int>(cfg_.get_int("forest", "tuning_trees", 500)));
      log(fmt::format("tuned mtry = {}", h.mtry));
    }
    const CausalForest f = grow_forest(std::move(fd), nuisance, h, seed);
    const CateVector cate = predict_oob(f);
    const OverlapAteResult ate = overlap_ate(f, cate);

    std::vector<IteSummary> groups;
    for (Field by : field_list(cfg_, "forest", "group_by",
                               {"working_years", "productivity_log", "title", "university_class", "department",
                                "has_profile"})) {
      groups.push_back(ite_summary(cate, d, by));
      for (const std::string& note : groups.back().notes) log(note);
    }
    write("ite.csv", format_ite_csv(cate));
    write("ite_by_group.csv", format_ite_groups_csv(groups));
    write("forest_summary.txt", format_forest_summary(f, cate, ate));
    record(ate.estimate);
  }

  void balance_stage() {
    const std::string how = cfg_.get_string("balance", "adjustment", "match");
    Adjustment adj;
    if (how == "match") adj = matches();
    else if (how == "iptw") adj = iptw_weights(propensity(), truncation());
    else if (how != "none") throw SpecError(fmt::format("config [balance] adjustment: unknown value '{}'", how));
    const BalanceTable t = balance_table(complete_data(), adj);
    write("balance.csv", format_balance_csv(t));
    write("love_plot.csv", format_love_plot_csv(love_plot_data(t)));
    double before = 0.0;
    double after = 0.0;
    for (const BalanceRow& r : t.rows) {
      before = std::max(before, std::abs(r.smd_before));
      after = std::max(after, std::abs(r.smd_after));
    }
    log(fmt::format("max |SMD| before {:.3f}, after {:.3f}", before, after));
  }

  void sensitivity_stage() {
    const Formula spec = formula_or(cfg_, "sensitivity", "spec", default_baseline_spec());
    const SensitivityReport r = sensitivity_analysis(
        complete_data(), spec, field_list(cfg_, "sensitivity", "benchmarks", {"title", "working_years", "productivity_log"}),
        cfg_.get_double("sensitivity", "alpha", 0.05), cfg_.get_double("sensitivity", "q", 1.0));
    const ContourGrid g = contour_data(r.estimate.beta, r.estimate.se, r.dof,
                                       static_cast<int>(cfg_.get_int("sensitivity", "grid", 50)),
                                       cfg_.get_double("sensitivity", "max", 0.5));
    write("sensitivity.txt", format_sensitivity_report(r));
    write("contours.csv", format_contours_csv(g, &r));
    log(fmt::format("robustness value {:.4f} (at alpha {:.4f})", r.rv_point, r.rv_alpha));
  }

  void report_stage() {
    if (store_.empty()) throw StageError("report", "no inputs");
    const SummaryTable t = build_summary(store_.means, store_.estimates, truth_);
    write("summary.csv", format_summary_csv(t));
    const std::string text = format_summary_text(t);
    write("summary.txt", text);
    log(text);
    summary_ = t;
  }

  const RunOptions& opt_;
  Config cfg_;
  std::uint64_t seed_;
  std::string stamp_line_;
  ColumnMap columns_;
  ZeroRule rule_ = ZeroRule::PlusOne;

  std::optional<Dataset> data_;
  std::optional<PropensityFit> propensity_;
  std::optional<MatchResult> match_;
  EstimateStore store_;
  std::map<Estimand, double> truth_;
  std::optional<SummaryTable> summary_;
  std::set<std::string> written_;
};

nlohmann::ordered_json versions() {
  nlohmann::ordered_json v;
  v["causalgap"] = CAUSALGAP_VERSION;
  v["eigen"] = fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION);
  v["boost"] = fmt::format("{}.{}.{}", BOOST_VERSION / 100000, BOOST_VERSION / 100 % 1000, BOOST_VERSION % 100);
  v["fmt"] = fmt::format("{}.{}.{}", FMT_VERSION / 10000, FMT_VERSION / 100 % 100, FMT_VERSION % 100);
  v["openssl"] = OPENSSL_VERSION_TEXT;
  return v;
}

}  // namespace

RunResult run_pipeline(const RunOptions& options) {
  Config cfg = options.config_path.empty() ? Config::parse("") : Config::load(options.config_path);
  const std::uint64_t seed =
      options.seed ? *options.seed : static_cast<std::uint64_t>(cfg.get_int("run", "seed", 1));

  std::vector<std::string> stages;
  if (options.stages) {
    std::string joined;
    for (const std::string& s : *options.stages) joined += s + ",";
    stages = parse_stage_list(joined);
  } else if (cfg.has("run", "stages")) {
    stages = parse_stage_list(cfg.get_string("run", "stages", ""));
  } else {
    for (const std::string& s : pipeline_stages()) {
      if (s == "simulate" && cfg.has("input", "path")) continue;
      stages.push_back(s);
    }
  }

  std::filesystem::create_directories(options.out_dir);
  RunResult result;
  result.stages = stages;
  result.config_sha256 = cfg.sha256();
  result.seed = seed;

  Runner runner(options, std::move(cfg), seed);
  std::vector<std::string> completed;
  std::optional<StageError> failure;
  for (const std::string& stage : stages) {
    try {
      runner.run(stage);
      completed.push_back(stage);
    } catch (const StageError& e) {
      failure = e;
      break;
    } catch (const std::exception& e) {
      failure = StageError(stage, e.what());
      break;
    }
  }
  result.artifacts = runner.artifacts();
  result.summary = runner.summary();

  nlohmann::ordered_json manifest;
  manifest["config_sha256"] = result.config_sha256;
  manifest["seed"] = seed;
  manifest["stages"] = stages;
  manifest["completed"] = completed;
  manifest["failed_stage"] = failure ? nlohmann::ordered_json(failure->stage()) : nlohmann::ordered_json();
  manifest["error"] = failure ? nlohmann::ordered_json(failure->what()) : nlohmann::ordered_json();
  manifest["versions"] = versions();
  manifest["kernels"] = std::string(kernels::active().name);
  manifest["artifacts"] = result.artifacts;
  {
    std::ofstream out(options.out_dir / "run_manifest.json", std::ios::binary);
    out << manifest.dump(2) << '\n';
  }
  if (failure) throw *failure;
  return result;
}

}  // namespace causalgap
