#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace lsdhm::harness {

// Every tunable of the harness. Read from `key=value` text with `#` comments;
// keys are namespaced by stage. Stage seeds left at 0 are derived from
// run.seed, so a single seed reproduces a whole run.
struct RunConfig {
  // run
  std::uint64_t seed = 1;
  unsigned threads = 1;

  // data
  std::size_t data_classes = 0;  // generated classes; 0 = all ten
  std::size_t data_per_class = 200;
  double data_noise = 0.05;
  double data_layout_jitter = 0.15;
  std::size_t data_glyphs_min = 2;
  std::size_t data_glyphs_max = 4;
  std::string data_dir;  // ingest train.tsv/test.tsv PPM manifests from here
  std::size_t data_num_labels = 10;  // label range of ingested data
  std::uint64_t data_seed = 0;

  // net
  bool net_lcs = true;
  double net_lambda = 0.3;
  std::size_t net_aux_channels = 16;
  std::size_t net_attach_layer = 2;
  std::size_t net_epochs = 10;
  std::size_t net_batch = 32;
  double net_lr = 0.003;
  double net_lr_decay = 0.9;
  double net_momentum = 0.9;
  double net_weight_decay = 5e-4;
  std::uint64_t net_seed = 0;

  // feature extraction
  std::size_t extract_layer = 2;
  std::size_t sample_cap = 200000;
  std::uint64_t sample_seed = 0;

  // pca (0 = min(80, D))
  std::size_t pca_m = 16;

  // gmm
  std::size_t gmm_k = 16;
  std::size_t gmm_max_iters = 100;
  double gmm_tol = 1e-6;
  double gmm_weight_floor = 1e-6;
  double gmm_variance_floor = 1e-4;
  std::uint64_t gmm_seed = 0;

  // fisher vector
  double fv_alpha = 0.5;
  double fv_posterior_threshold = 1e-12;

  // bag of words baseline
  std::size_t bow_k = 256;
  std::size_t bow_iters = 20;
  std::uint64_t bow_seed = 0;

  // svm
  double svm_c = 1.0;
  std::size_t svm_epochs = 30;
  double svm_eta0 = 0.5;
  bool svm_sweep = false;  // also report C in {0.1, 1, 10}
  std::uint64_t svm_seed = 0;

  // pipeline / experiments
  bool pipeline_baselines = true;
  double stats_top_fraction = 0.1;
  std::size_t occlusion_images = 20;

  // Throws ConfigError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);

  // All keys with their current values, in a stable order.
  std::vector<std::pair<std::string, std::string>> entries() const;

  // Stage seeds after derivation from `seed`.
  std::map<std::string, std::uint64_t> resolved_seeds() const;
  std::uint64_t stage_seed(const std::string& stage) const;
};

RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

// Applies "key=value" strings (e.g. from --set on the command line).
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides);

std::string format_config(const RunConfig& cfg);

}  // namespace lsdhm::harness
