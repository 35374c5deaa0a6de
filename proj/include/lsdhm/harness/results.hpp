#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsdhm/harness/config.hpp"
#include "lsdhm/harness/pipeline.hpp"

namespace lsdhm::harness {

// Comma-separated table with a header row; cells never contain commas.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;  // throws DataError if absent
  friend bool operator==(const CsvTable&, const CsvTable&) = default;
};

std::string format_csv(const CsvTable& t);
CsvTable parse_csv(const std::string& text);
void write_csv(const std::filesystem::path& path, const CsvTable& t);
CsvTable read_csv(const std::filesystem::path& path);

// Percent with two decimals, "nan" for NaN.
std::string percent(double fraction);

// results.csv: feature_set, c, dim, train_accuracy, test_accuracy (percent).
CsvTable results_table(const std::vector<SetResult>& sets);
// per_class.csv: feature_set, c, class, test_accuracy (percent).
CsvTable per_class_table(const std::vector<SetResult>& sets);

// 64-bit FNV-1a, as 16 lowercase hex digits.
std::string fnv1a_hex(std::span<const std::uint8_t> bytes);
std::string hash_file(const std::filesystem::path& path);

struct RunRecord {
  std::string command;
  std::vector<std::pair<std::string, std::string>> config;
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> artifacts;  // name -> path relative to the run dir
  std::map<std::string, std::string> hashes;     // name -> FNV-1a of the file
  std::vector<StageTiming> timings;
  std::vector<SetResult> results;
  std::optional<double> net_test_accuracy;
  nlohmann::json metrics = nlohmann::json::object();  // command-specific values

  static RunRecord start(const std::string& command, const RunConfig& cfg);
  // Hashes every artifact under `dir`.
  void hash_artifacts(const std::filesystem::path& dir);
};

nlohmann::json to_json(const RunRecord& r);
RunRecord run_record_from_json(const nlohmann::json& j);
void write_run_json(const std::filesystem::path& path, const RunRecord& r);
RunRecord read_run_json(const std::filesystem::path& path);

}  // namespace lsdhm::harness
