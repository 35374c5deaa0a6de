#include "lsdhm/harness/results.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "lsdhm/binary_io.hpp"
#include "lsdhm/error.hpp"

namespace lsdhm::harness {

namespace fs = std::filesystem;
using nlohmann::json;

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw DataError("CSV has no column '" + name + "'");
}

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string join_row(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].find_first_of(",\n") != std::string::npos)
      throw ConfigError("CSV cell '" + cells[i] + "' contains a separator");
    if (i) out += ',';
    out += cells[i];
  }
  return out;
}

std::string number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

json nan_to_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

double null_to_nan(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

std::string format_csv(const CsvTable& t) {
  std::string out = join_row(t.header) + "\n";
  for (const auto& r : t.rows) {
    if (r.size() != t.header.size()) throw ConfigError("CSV row width differs from header");
    out += join_row(r) + "\n";
  }
  return out;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_row(line);
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else {
      if (cells.size() != t.header.size()) throw DataError("CSV row width differs from header");
      t.rows.push_back(std::move(cells));
    }
  }
  if (first) throw DataError("CSV without header");
  return t;
}

void write_csv(const fs::path& path, const CsvTable& t) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << format_csv(t);
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

std::string percent(double fraction) {
  if (std::isnan(fraction)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * fraction);
  return buf;
}

CsvTable results_table(const std::vector<SetResult>& sets) {
  CsvTable t{{"feature_set", "c", "dim", "train_accuracy", "test_accuracy"}, {}};
  for (const auto& s : sets)
    t.rows.push_back({s.name, number(s.c), std::to_string(s.dim), percent(s.train_accuracy),
                      percent(s.test_accuracy)});
  return t;
}

CsvTable per_class_table(const std::vector<SetResult>& sets) {
  CsvTable t{{"feature_set", "c", "class", "test_accuracy"}, {}};
  for (const auto& s : sets)
    for (std::size_t k = 0; k < s.per_class.size(); ++k)
      t.rows.push_back({s.name, number(s.c), std::to_string(k), percent(s.per_class[k])});
  return t;
}

std::string fnv1a_hex(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string hash_file(const fs::path& path) { return fnv1a_hex(read_file_bytes(path)); }

RunRecord RunRecord::start(const std::string& command, const RunConfig& cfg) {
  RunRecord r;
  r.command = command;
  r.config = cfg.entries();
  r.seeds = cfg.resolved_seeds();
  r.seeds["run"] = cfg.seed;
  return r;
}

void RunRecord::hash_artifacts(const fs::path& dir) {
  for (const auto& [name, rel] : artifacts) {
    const fs::path p = dir / rel;
    if (fs::is_regular_file(p)) {
      hashes[name] = hash_file(p);
    } else if (fs::is_directory(p)) {
      // directory artifacts hash the concatenation of their files in name order
      std::vector<fs::path> files;
      for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file()) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      std::vector<std::uint8_t> all;
      for (const auto& f : files) {
        const auto b = read_file_bytes(f);
        all.insert(all.end(), b.begin(), b.end());
      }
      hashes[name] = fnv1a_hex(all);
    }
  }
}

json to_json(const RunRecord& r) {
  json j;
  j["command"] = r.command;
  json cfg = json::object();
  for (const auto& [k, v] : r.config) cfg[k] = v;
  j["config"] = cfg;
  j["seeds"] = r.seeds;
  json arts = json::object();
  for (const auto& [name, path] : r.artifacts) {
    json a = {{"path", path}};
    if (auto h = r.hashes.find(name); h != r.hashes.end()) a["fnv1a64"] = h->second;
    arts[name] = a;
  }
  j["artifacts"] = arts;
  json timings = json::array();
  for (const auto& t : r.timings) timings.push_back({{"stage", t.stage}, {"seconds", t.seconds}});
  j["timings"] = timings;
  json results = json::array();
  for (const auto& s : r.results) {
    json pc = json::array();
    for (double v : s.per_class) pc.push_back(nan_to_null(v));
    results.push_back({{"feature_set", s.name},
                       {"c", s.c},
                       {"dim", s.dim},
                       {"train_accuracy", s.train_accuracy},
                       {"test_accuracy", s.test_accuracy},
                       {"per_class", pc}});
  }
  j["results"] = results;
  j["net_test_accuracy"] = r.net_test_accuracy ? json(*r.net_test_accuracy) : json(nullptr);
  j["metrics"] = r.metrics;
  return j;
}

RunRecord run_record_from_json(const json& j) {
  try {
    RunRecord r;
    r.command = j.at("command").get<std::string>();
    // JSON objects are key-sorted, so config entries come back in key order
    for (const auto& [k, v] : j.at("config").items()) r.config.emplace_back(k, v.get<std::string>());
    r.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
    for (const auto& [name, a] : j.at("artifacts").items()) {
      r.artifacts[name] = a.at("path").get<std::string>();
      if (a.contains("fnv1a64")) r.hashes[name] = a.at("fnv1a64").get<std::string>();
    }
    for (const auto& t : j.at("timings"))
      r.timings.push_back({t.at("stage").get<std::string>(), t.at("seconds").get<double>()});
    for (const auto& s : j.at("results")) {
      SetResult x;
      x.name = s.at("feature_set").get<std::string>();
      x.c = s.at("c").get<double>();
      x.dim = s.at("dim").get<std::size_t>();
      x.train_accuracy = s.at("train_accuracy").get<double>();
      x.test_accuracy = s.at("test_accuracy").get<double>();
      for (const auto& v : s.at("per_class")) x.per_class.push_back(null_to_nan(v));
      r.results.push_back(std::move(x));
    }
    if (!j.at("net_test_accuracy").is_null())
      r.net_test_accuracy = j.at("net_test_accuracy").get<double>();
    r.metrics = j.at("metrics");
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed run.json: ") + e.what());
  }
}

void write_run_json(const fs::path& path, const RunRecord& r) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json(r).dump(2) << '\n';
}

RunRecord read_run_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    return run_record_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace lsdhm::harness
