#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "causalgap/report.hpp"

namespace causalgap {

// INI-style configuration: [section] headers, key = value lines, ';' or '#'
// comments. Unknown sections and keys are rejected.
class Config {
 public:
  static Config parse(std::string_view text, std::filesystem::path base_dir = {});
  static Config load(const std::filesystem::path& path);

  bool has(std::string_view section, std::string_view key) const;
  std::string get_string(std::string_view section, std::string_view key, std::string_view fallback) const;
  double get_double(std::string_view section, std::string_view key, double fallback) const;
  long long get_int(std::string_view section, std::string_view key, long long fallback) const;
  bool get_bool(std::string_view section, std::string_view key, bool fallback) const;
  std::vector<std::string> get_list(std::string_view section, std::string_view key,
                                    std::vector<std::string> fallback) const;

  // Relative paths resolve against the config file's directory.
  std::filesystem::path resolve(const std::filesystem::path& p) const;
  // Hex SHA-256 of the config text.
  const std::string& sha256() const { return sha256_; }

 private:
  std::map<std::string, std::map<std::string, std::string, std::less<>>, std::less<>> values_;
  std::filesystem::path base_dir_;
  std::string sha256_;
};

std::string sha256_hex(std::string_view data);

// Canonical stage order; a run executes its subset in this order.
const std::vector<std::string>& pipeline_stages();
std::vector<std::string> parse_stage_list(std::string_view text);

struct RunOptions {
  std::filesystem::path config_path;
  std::optional<std::uint64_t> seed;                 // overrides [run] seed
  std::filesystem::path out_dir = "out";
  std::optional<std::vector<std::string>> stages;    // overrides [run] stages
  std::ostream* log = nullptr;
};

struct RunResult {
  std::vector<std::string> stages;
  std::string config_sha256;
  std::uint64_t seed = 0;
  std::optional<SummaryTable> summary;
  std::vector<std::string> artifacts;
};

// Runs the selected stages and writes every artifact into out_dir, each
// stamped with the config hash and seed. A failing stage raises StageError;
// artifacts of completed stages and a manifest naming the failure remain.
RunResult run_pipeline(const RunOptions& options);

}  // namespace causalgap
