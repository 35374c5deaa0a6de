#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lsdhm/convnet.hpp"
#include "lsdhm/fisher.hpp"
#include "lsdhm/gmm.hpp"
#include "lsdhm/harness/config.hpp"
#include "lsdhm/harness/scenes.hpp"
#include "lsdhm/pca.hpp"
#include "lsdhm/svm.hpp"

namespace lsdhm::harness {

struct Dataset {
  LabeledDataset train, test;
  // Glyph bounding boxes per image; empty for ingested data.
  std::vector<std::vector<Rect>> train_boxes, test_boxes;
  std::vector<std::pair<int, int>> ambiguous_pairs;
};

MicroSceneSpec scene_spec(const RunConfig& cfg);

// Ingests `data.dir` (train.tsv / test.tsv) when set, otherwise generates the
// synthetic scenes.
Dataset load_dataset(const RunConfig& cfg);

// PPM images plus train.tsv / test.tsv manifests, readable by load_dataset.
void save_dataset(const std::filesystem::path& dir, const Dataset& data);

nn::ConvNetSpec network_spec(const RunConfig& cfg, int num_classes,
                             nn::Shape input = {32, 32, 3});
nn::TrainConfig train_config(const RunConfig& cfg);
nn::ConvNet train_network(const RunConfig& cfg, const LabeledDataset& train,
                          std::vector<nn::TrainLogRow>* log = nullptr);

// Conv maps at one layer and last-hidden FC features for every image.
struct Extracted {
  std::vector<Tensor3> maps;
  std::vector<std::vector<double>> fc;
  std::vector<int> labels;
};

Extracted extract(const nn::ConvNet& net, const LabeledDataset& data, std::size_t layer,
                  unsigned threads = 1);

// Max-abs normalized fibers drawn uniformly without replacement (all of them
// when there are at most `cap`), kept in image/position order.
DescriptorSet sample_descriptors(const std::vector<Tensor3>& maps, std::size_t cap,
                                 std::uint64_t seed);

PcaModel fit_pca_stage(const RunConfig& cfg, const DescriptorSet& sample);
GmmModel fit_gmm_stage(const RunConfig& cfg, const DescriptorSet& projected,
                       EmTrace* trace = nullptr);
BowCodebook fit_bow_stage(const RunConfig& cfg, const DescriptorSet& projected);

FisherOptions fisher_options(const RunConfig& cfg);

// Feature set names in report order.
inline const std::vector<std::string>& feature_set_names() {
  static const std::vector<std::string> names = {"fc", "fcv", "direct", "bow", "fused"};
  return names;
}

using FeatureTable = std::map<std::string, std::vector<std::vector<double>>>;

// Encodes every image into each feature set. FC features are l2 normalized.
// Direct and BoW are skipped when `bow` is absent and baselines are off.
FeatureTable encode_features(const RunConfig& cfg, const Extracted& ex, const PcaModel& pca,
                             const GmmModel& gmm, const BowCodebook* bow);

// Linear SVM; a training set with a single label gives a constant classifier.
SvmModel train_classifier(const RunConfig& cfg, const std::vector<std::vector<double>>& features,
                          const std::vector<int>& labels, int num_classes, double c);

struct SetResult {
  std::string name;
  double c = 1.0;
  std::size_t dim = 0;
  double train_accuracy = 0.0;  // fractions in [0, 1]
  double test_accuracy = 0.0;
  std::vector<double> per_class;  // test accuracy per class, NaN without test images
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

// Times `fn` and rethrows its errors as "stage <name>: ..." with the same
// error category.
void run_stage(const std::string& name, std::vector<StageTiming>& timings,
               const std::function<void()>& fn);

struct PipelineResult {
  std::vector<SetResult> sets;
  double net_test_accuracy = 0.0;
  std::vector<nn::TrainLogRow> train_log;
  std::vector<StageTiming> timings;
  std::map<std::string, std::string> artifacts;  // name -> path relative to the output dir
  EmTrace gmm_trace;

  const SetResult& set(const std::string& name, double c) const;
  const SetResult& set(const std::string& name) const;
};

// Everything a run produces in memory, kept for experiments.
struct PipelineState {
  Dataset data;
  nn::ConvNet net;
  PcaModel pca;
  GmmModel gmm;
  std::optional<BowCodebook> bow;
  Extracted train, test;
  FeatureTable train_features, test_features;
};

// Runs every stage. With a non-empty `out_dir`, all models are saved there as
// FVM1 files and encoded vectors as FVT1 files. Errors are rethrown with the
// stage name prepended and their category preserved.
PipelineResult run_pipeline(const RunConfig& cfg, const std::filesystem::path& out_dir = {},
                            PipelineState* state = nullptr);

// Evaluates every feature set (and the C sweep when enabled).
std::vector<SetResult> evaluate_sets(const RunConfig& cfg, const FeatureTable& train,
                                     const std::vector<int>& train_labels,
                                     const FeatureTable& test, const std::vector<int>& test_labels,
                                     int num_classes, const std::filesystem::path& model_dir = {});

// Batch encodings: one FVT1 file per vector plus manifest.tsv (filename, label).
void save_encoded(const std::filesystem::path& dir, const std::vector<std::vector<double>>& vectors,
                  const std::vector<int>& labels);
std::pair<std::vector<std::vector<double>>, std::vector<int>> load_encoded(
    const std::filesystem::path& dir);

double accuracy_of(const nn::ConvNet& net, const LabeledDataset& data);

}  // namespace lsdhm::harness
