#include "lsdhm/harness/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <variant>

#include "lsdhm/error.hpp"
#include "lsdhm/random.hpp"

namespace lsdhm::harness {

namespace {

static_assert(std::is_same_v<std::size_t, std::uint64_t>);
using FieldRef = std::variant<std::uint64_t*, unsigned*, double*, bool*, std::string*>;

template <typename Cfg>
std::vector<std::pair<std::string, FieldRef>> fields(Cfg& c) {
  return {
      {"run.seed", &c.seed},
      {"run.threads", &c.threads},
      {"data.classes", &c.data_classes},
      {"data.per_class", &c.data_per_class},
      {"data.noise", &c.data_noise},
      {"data.layout_jitter", &c.data_layout_jitter},
      {"data.glyphs_min", &c.data_glyphs_min},
      {"data.glyphs_max", &c.data_glyphs_max},
      {"data.dir", &c.data_dir},
      {"data.num_labels", &c.data_num_labels},
      {"data.seed", &c.data_seed},
      {"net.lcs", &c.net_lcs},
      {"net.lambda", &c.net_lambda},
      {"net.aux_channels", &c.net_aux_channels},
      {"net.attach_layer", &c.net_attach_layer},
      {"net.epochs", &c.net_epochs},
      {"net.batch", &c.net_batch},
      {"net.lr", &c.net_lr},
      {"net.lr_decay", &c.net_lr_decay},
      {"net.momentum", &c.net_momentum},
      {"net.weight_decay", &c.net_weight_decay},
      {"net.seed", &c.net_seed},
      {"extract.layer", &c.extract_layer},
      {"extract.sample_cap", &c.sample_cap},
      {"extract.sample_seed", &c.sample_seed},
      {"pca.m", &c.pca_m},
      {"gmm.k", &c.gmm_k},
      {"gmm.max_iters", &c.gmm_max_iters},
      {"gmm.tol", &c.gmm_tol},
      {"gmm.weight_floor", &c.gmm_weight_floor},
      {"gmm.variance_floor", &c.gmm_variance_floor},
      {"gmm.seed", &c.gmm_seed},
      {"fv.alpha", &c.fv_alpha},
      {"fv.posterior_threshold", &c.fv_posterior_threshold},
      {"bow.k", &c.bow_k},
      {"bow.iters", &c.bow_iters},
      {"bow.seed", &c.bow_seed},
      {"svm.c", &c.svm_c},
      {"svm.epochs", &c.svm_epochs},
      {"svm.eta0", &c.svm_eta0},
      {"svm.sweep", &c.svm_sweep},
      {"svm.seed", &c.svm_seed},
      {"pipeline.baselines", &c.pipeline_baselines},
      {"stats.top_fraction", &c.stats_top_fraction},
      {"occlusion.images", &c.occlusion_images},
  };
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_integer(const std::string& key, const std::string& v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("config key '" + key + "': '" + v + "' is not a non-negative integer");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::string to_text(const FieldRef& f) {
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return *p;
        } else if constexpr (std::is_same_v<T, bool>) {
          return *p ? "true" : "false";
        } else if constexpr (std::is_same_v<T, double>) {
          std::ostringstream os;
          os.precision(17);
          os << *p;
          return os.str();
        } else {
          return std::to_string(*p);
        }
      },
      f);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  for (auto& [name, ref] : fields(*this)) {
    if (name != key) continue;
    std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, std::string>) *p = value;
          else if constexpr (std::is_same_v<T, bool>) *p = parse_bool(key, value);
          else if constexpr (std::is_same_v<T, double>) *p = parse_double(key, value);
          else *p = parse_integer<T>(key, value);
        },
        ref);
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  RunConfig copy = *this;
  for (auto& [name, ref] : fields(copy)) out.emplace_back(name, to_text(ref));
  return out;
}

std::uint64_t RunConfig::stage_seed(const std::string& stage) const {
  const std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> table = {
      {"data", {data_seed, 1}}, {"net", {net_seed, 2}},  {"sample", {sample_seed, 3}},
      {"gmm", {gmm_seed, 4}},   {"bow", {bow_seed, 5}},  {"svm", {svm_seed, 6}},
  };
  const auto it = table.find(stage);
  if (it == table.end()) throw ConfigError("unknown stage '" + stage + "'");
  return it->second.first != 0 ? it->second.first : derive_seed(seed, it->second.second);
}

std::map<std::string, std::uint64_t> RunConfig::resolved_seeds() const {
  std::map<std::string, std::uint64_t> out;
  for (const char* s : {"data", "net", "sample", "gmm", "bow", "svm"}) out[s] = stage_seed(s);
  return out;
}

RunConfig parse_config(const std::string& text, RunConfig cfg) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    cfg.set(trim(o.substr(0, eq)), o.substr(eq + 1));
  }
}

std::string format_config(const RunConfig& cfg) {
  std::ostringstream os;
  for (const auto& [k, v] : cfg.entries()) os << k << '=' << v << '\n';
  return os.str();
}

}  // namespace lsdhm::harness
