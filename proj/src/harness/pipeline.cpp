#include "lsdhm/harness/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "lsdhm/binary_io.hpp"
#include "lsdhm/error.hpp"
#include "lsdhm/harness/ppm.hpp"
#include "lsdhm/model_io.hpp"
#include "lsdhm/parallel.hpp"
#include "lsdhm/random.hpp"

namespace lsdhm::harness {

namespace fs = std::filesystem;

MicroSceneSpec scene_spec(const RunConfig& cfg) {
  MicroSceneSpec spec = MicroSceneSpec::default_spec(cfg.stage_seed("data"), cfg.data_noise);
  spec.layout_jitter = cfg.data_layout_jitter;
  spec.glyphs_min = cfg.data_glyphs_min;
  spec.glyphs_max = cfg.data_glyphs_max;
  if (cfg.data_classes > 0) {
    if (cfg.data_classes > spec.classes.size())
      throw ConfigError("data.classes exceeds the " + std::to_string(spec.classes.size()) +
                        " available scene classes");
    spec.classes.resize(cfg.data_classes);
    const int n = static_cast<int>(cfg.data_classes);
    std::erase_if(spec.ambiguous_pairs, [n](auto p) { return p.first >= n || p.second >= n; });
  }
  validate(spec);
  return spec;
}

Dataset load_dataset(const RunConfig& cfg) {
  Dataset out;
  if (!cfg.data_dir.empty()) {
    const fs::path dir = cfg.data_dir;
    const int labels = static_cast<int>(cfg.data_num_labels);
    out.train = ingest_images(dir, dir / "train.tsv", labels);
    out.test = ingest_images(dir, dir / "test.tsv", labels);
    if (!out.train[0].image.same_shape(out.test[0].image))
      throw DataError("train and test images differ in size");
    return out;
  }
  const MicroSceneSpec spec = scene_spec(cfg);
  SceneSplit split = generate_dataset(spec, cfg.data_per_class);
  out.train = std::move(split.train);
  out.test = std::move(split.test);
  out.train_boxes = std::move(split.train_boxes);
  out.test_boxes = std::move(split.test_boxes);
  out.ambiguous_pairs = spec.ambiguous_pairs;
  return out;
}

void save_dataset(const fs::path& dir, const Dataset& data) {
  for (const auto& [name, ds] : {std::pair{"train", &data.train}, std::pair{"test", &data.test}}) {
    fs::create_directories(dir / name);
    std::vector<ManifestEntry> entries;
    for (std::size_t i = 0; i < ds->size(); ++i) {
      char file[32];
      std::snprintf(file, sizeof file, "%s/%06zu.ppm", name, i);
      write_ppm(dir / file, (*ds)[i].image);
      entries.push_back({file, (*ds)[i].label});
    }
    std::ofstream(dir / (std::string(name) + ".tsv")) << format_manifest(entries);
  }
}

nn::ConvNetSpec network_spec(const RunConfig& cfg, int num_classes, nn::Shape input) {
  nn::ConvNetSpec spec = nn::ConvNetSpec::desk_default(static_cast<std::size_t>(num_classes),
                                                       cfg.net_lcs);
  spec.input = input;
  for (auto& h : spec.heads) {
    h.attach_layer = cfg.net_attach_layer;
    h.channels = cfg.net_aux_channels;
  }
  return spec;
}

nn::TrainConfig train_config(const RunConfig& cfg) {
  nn::TrainConfig tc;
  if (cfg.net_lcs) tc.aux_weights = {cfg.net_lambda};
  tc.learning_rate = cfg.net_lr;
  tc.lr_decay = cfg.net_lr_decay;
  tc.momentum = cfg.net_momentum;
  tc.weight_decay = cfg.net_weight_decay;
  tc.batch_size = cfg.net_batch;
  tc.epochs = cfg.net_epochs;
  tc.seed = derive_seed(cfg.stage_seed("net"), 1);
  tc.threads = cfg.threads;
  return tc;
}

nn::ConvNet train_network(const RunConfig& cfg, const LabeledDataset& train,
                          std::vector<nn::TrainLogRow>* log) {
  if (train.empty()) throw DataError("no training images");
  const Tensor3& first = train[0].image;
  nn::ConvNet net(network_spec(cfg, train.num_classes(),
                               {first.height(), first.width(), first.channels()}),
                  cfg.stage_seed("net"));
  auto rows = nn::train(net, train, train_config(cfg));
  if (log) *log = std::move(rows);
  return net;
}

Extracted extract(const nn::ConvNet& net, const LabeledDataset& data, std::size_t layer,
                  unsigned threads) {
  const auto& layers = net.spec().layers;
  if (layer >= layers.size() || layers[layer].kind == nn::LayerKind::FullyConnected)
    throw ConfigError("extract.layer " + std::to_string(layer) + " is not a conv or pool layer");
  Extracted ex;
  ex.maps.resize(data.size());
  ex.fc.resize(data.size());
  ex.labels = data.labels();
  parallel_for(data.size(), threads, [&](std::size_t i) {
    nn::ForwardResult fw = net.forward(data[i].image, false);
    ex.maps[i] = std::move(fw.maps[layer]);
    ex.fc[i] = std::move(fw.fc_features);
  });
  return ex;
}

DescriptorSet sample_descriptors(const std::vector<Tensor3>& maps, std::size_t cap,
                                 std::uint64_t seed) {
  if (maps.empty()) throw DataError("no maps to sample descriptors from");
  const std::size_t per = maps[0].height() * maps[0].width();
  const std::size_t total = per * maps.size();
  std::vector<std::size_t> pick;
  if (cap == 0 || total <= cap) {
    pick.resize(total);
    for (std::size_t i = 0; i < total; ++i) pick[i] = i;
  } else {
    std::vector<std::size_t> all(total);
    for (std::size_t i = 0; i < total; ++i) all[i] = i;
    Rng rng(seed);
    rng.shuffle(all.begin(), all.end());
    pick.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(cap));
    std::sort(pick.begin(), pick.end());
  }
  const std::size_t d = maps[0].channels();
  DescriptorSet out(d);
  for (std::size_t idx : pick) {
    const Tensor3& m = maps[idx / per];
    const std::size_t pos = idx % per;
    out.push_back(max_abs_normalize(m.fiber(pos / m.width(), pos % m.width())));
  }
  return out;
}

PcaModel fit_pca_stage(const RunConfig& cfg, const DescriptorSet& sample) {
  const std::size_t m = cfg.pca_m == 0 ? default_pca_dim(sample.dim()) : cfg.pca_m;
  return fit_pca(sample, m);
}

GmmModel fit_gmm_stage(const RunConfig& cfg, const DescriptorSet& projected, EmTrace* trace) {
  EmConfig ec;
  ec.max_iters = cfg.gmm_max_iters;
  ec.tol = cfg.gmm_tol;
  ec.seed = cfg.stage_seed("gmm");
  ec.weight_floor = cfg.gmm_weight_floor;
  ec.variance_floor = cfg.gmm_variance_floor;
  ec.threads = cfg.threads;
  return fit_gmm(projected, cfg.gmm_k, ec, trace);
}

BowCodebook fit_bow_stage(const RunConfig& cfg, const DescriptorSet& projected) {
  return train_bow_codebook(projected, cfg.bow_k, cfg.stage_seed("bow"), cfg.bow_iters);
}

FisherOptions fisher_options(const RunConfig& cfg) {
  FisherOptions o;
  o.power = cfg.fv_alpha;
  o.posterior_threshold = cfg.fv_posterior_threshold;
  return o;
}

FeatureTable encode_features(const RunConfig& cfg, const Extracted& ex, const PcaModel& pca,
                             const GmmModel& gmm, const BowCodebook* bow) {
  const std::size_t n = ex.maps.size();
  const FisherOptions opts = fisher_options(cfg);
  const bool baselines = cfg.pipeline_baselines;
  FeatureTable t;
  for (const auto& name : feature_set_names()) {
    if (!baselines && (name == "direct" || name == "bow")) continue;
    if (name == "bow" && !bow) continue;
    t[name].resize(n);
  }
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    std::vector<double> fc = ex.fc[i];
    l2_normalize_inplace(fc);
    std::vector<double> fcv = encode_fcv(ex.maps[i], pca, gmm, opts).values;
    t.at("fused")[i] = fuse(fcv, ex.fc[i]).values;
    t.at("fc")[i] = std::move(fc);
    t.at("fcv")[i] = std::move(fcv);
    if (t.count("direct")) t.at("direct")[i] = encode_direct(ex.maps[i]);
    if (t.count("bow")) t.at("bow")[i] = encode_bow(ex.maps[i], pca, *bow);
  });
  return t;
}

SvmModel train_classifier(const RunConfig& cfg, const std::vector<std::vector<double>>& features,
                          const std::vector<int>& labels, int num_classes, double c) {
  if (features.empty()) throw DataError("no training features");
  const std::set<int> present(labels.begin(), labels.end());
  if (present.size() < 2) {
    SvmModel m;
    m.num_classes = static_cast<std::size_t>(num_classes);
    m.dim = features[0].size();
    m.c = c;
    m.weights.assign(m.num_classes * m.dim, 0.0);
    m.biases.assign(m.num_classes, 0.0);
    m.biases.at(static_cast<std::size_t>(*present.begin())) = 1.0;
    return m;
  }
  SvmConfig sc;
  sc.c = c;
  sc.epochs = cfg.svm_epochs;
  sc.seed = cfg.stage_seed("svm");
  sc.eta0 = cfg.svm_eta0;
  sc.threads = cfg.threads;
  return train_svm(features, labels, sc, num_classes);
}

namespace {

std::vector<double> per_class_accuracy(const SvmModel& m,
                                       const std::vector<std::vector<double>>& features,
                                       const std::vector<int>& labels, int num_classes) {
  std::vector<double> hit(static_cast<std::size_t>(num_classes), 0.0), count(hit.size(), 0.0);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto k = static_cast<std::size_t>(labels[i]);
    count[k] += 1.0;
    if (predict(m, features[i]).label == labels[i]) hit[k] += 1.0;
  }
  for (std::size_t k = 0; k < hit.size(); ++k)
    hit[k] = count[k] > 0.0 ? hit[k] / count[k] : std::numeric_limits<double>::quiet_NaN();
  return hit;
}

template <typename E>
[[noreturn]] void rethrow_as(const std::string& prefix, const E& e) {
  throw E(prefix + e.what());
}

std::string c_label(double c) {
  std::ostringstream os;
  os << c;
  return os.str();
}

}  // namespace

void run_stage(const std::string& name, std::vector<StageTiming>& timings,
               const std::function<void()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string prefix = "stage " + name + ": ";
  try {
    fn();
  } catch (const ConfigError& e) {
    rethrow_as(prefix, e);
  } catch (const ShapeError& e) {
    rethrow_as(prefix, e);
  } catch (const DataError& e) {
    rethrow_as(prefix, e);
  } catch (const NumericError& e) {
    rethrow_as(prefix, e);
  } catch (const Error& e) {
    rethrow_as(prefix, e);
  } catch (const fs::filesystem_error& e) {
    throw DataError(prefix + e.what());
  }
  timings.push_back(
      {name, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
}

const SetResult& PipelineResult::set(const std::string& name, double c) const {
  for (const auto& s : sets)
    if (s.name == name && s.c == c) return s;
  throw ConfigError("no result for feature set '" + name + "' at C=" + c_label(c));
}

const SetResult& PipelineResult::set(const std::string& name) const {
  for (const auto& s : sets)
    if (s.name == name) return s;
  throw ConfigError("no result for feature set '" + name + "'");
}

std::vector<SetResult> evaluate_sets(const RunConfig& cfg, const FeatureTable& train,
                                     const std::vector<int>& train_labels,
                                     const FeatureTable& test, const std::vector<int>& test_labels,
                                     int num_classes, const fs::path& model_dir) {
  std::vector<double> cs = {cfg.svm_c};
  if (cfg.svm_sweep)
    for (double c : {0.1, 1.0, 10.0})
      if (c != cfg.svm_c) cs.push_back(c);
  std::vector<SetResult> out;
  for (const auto& name : feature_set_names()) {
    const auto tr = train.find(name);
    if (tr == train.end()) continue;
    const auto& te = test.at(name);
    for (double c : cs) {
      const SvmModel m = train_classifier(cfg, tr->second, train_labels, num_classes, c);
      SetResult r;
      r.name = name;
      r.c = c;
      r.dim = m.dim;
      r.train_accuracy = accuracy(m, tr->second, train_labels);
      r.test_accuracy = te.empty() ? 0.0 : accuracy(m, te, test_labels);
      r.per_class = per_class_accuracy(m, te, test_labels, num_classes);
      out.push_back(std::move(r));
      if (!model_dir.empty() && c == cfg.svm_c) save_svm(model_dir / ("svm_" + name + ".fvm"), m);
    }
  }
  return out;
}

void save_encoded(const fs::path& dir, const std::vector<std::vector<double>>& vectors,
                  const std::vector<int>& labels) {
  fs::create_directories(dir);
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    char file[32];
    std::snprintf(file, sizeof file, "%06zu.fvt", i);
    save_vector_fvt1(dir / file, vectors[i]);
    entries.push_back({file, labels[i]});
  }
  std::ofstream(dir / "manifest.tsv") << format_manifest(entries);
}

std::pair<std::vector<std::vector<double>>, std::vector<int>> load_encoded(const fs::path& dir) {
  std::ifstream in(dir / "manifest.tsv");
  if (!in) throw DataError("cannot read " + (dir / "manifest.tsv").string());
  std::stringstream ss;
  ss << in.rdbuf();
  std::pair<std::vector<std::vector<double>>, std::vector<int>> out;
  for (const auto& e : parse_manifest(ss.str())) {
    out.first.push_back(load_vector_fvt1(dir / e.filename));
    out.second.push_back(e.label);
  }
  return out;
}

double accuracy_of(const nn::ConvNet& net, const LabeledDataset& data) {
  if (data.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& item : data.items()) {
    const auto scores = net.forward(item.image, false).main_scores;
    const auto best = std::max_element(scores.begin(), scores.end()) - scores.begin();
    if (best == item.label) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(data.size());
}

PipelineResult run_pipeline(const RunConfig& cfg, const fs::path& out_dir, PipelineState* keep) {
  PipelineResult res;
  PipelineState local;
  PipelineState& st = keep ? *keep : local;
  const bool save = !out_dir.empty();
  if (save) fs::create_directories(out_dir);
  auto record = [&](const std::string& name, const fs::path& rel) {
    res.artifacts[name] = rel.generic_string();
  };

  run_stage("data", res.timings, [&] { st.data = load_dataset(cfg); });
  const int num_classes = st.data.train.num_classes();

  run_stage("train-net", res.timings, [&] {
    st.net = train_network(cfg, st.data.train, &res.train_log);
    if (save) {
      save_net(out_dir / "net.fvm", st.net,
               train_config(cfg).resolved_aux_weights(st.net.spec().heads.size()));
      std::ofstream(out_dir / "train_log.csv") << nn::train_log_csv(res.train_log);
      record("net", "net.fvm");
      record("train_log", "train_log.csv");
    }
  });

  run_stage("extract", res.timings, [&] {
    st.train = extract(st.net, st.data.train, cfg.extract_layer, cfg.threads);
    st.test = extract(st.net, st.data.test, cfg.extract_layer, cfg.threads);
  });

  DescriptorSet projected;
  run_stage("fit-pca", res.timings, [&] {
    const DescriptorSet sample =
        sample_descriptors(st.train.maps, cfg.sample_cap, cfg.stage_seed("sample"));
    st.pca = fit_pca_stage(cfg, sample);
    projected = pca_project_all(st.pca, sample);
    if (save) {
      save_pca(out_dir / "pca.fvm", st.pca);
      record("pca", "pca.fvm");
    }
  });

  run_stage("fit-gmm", res.timings, [&] {
    st.gmm = fit_gmm_stage(cfg, projected, &res.gmm_trace);
    if (save) {
      save_gmm(out_dir / "gmm.fvm", st.gmm);
      record("gmm", "gmm.fvm");
    }
  });

  if (cfg.pipeline_baselines) {
    run_stage("fit-bow", res.timings, [&] {
      st.bow = fit_bow_stage(cfg, projected);
      if (save) {
        save_bow(out_dir / "bow.fvm", *st.bow);
        record("bow", "bow.fvm");
      }
    });
  }
  projected = DescriptorSet();

  run_stage("encode", res.timings, [&] {
    const BowCodebook* bow = st.bow ? &*st.bow : nullptr;
    st.train_features = encode_features(cfg, st.train, st.pca, st.gmm, bow);
    st.test_features = encode_features(cfg, st.test, st.pca, st.gmm, bow);
    if (save)
      for (const auto& [name, vecs] : st.train_features) {
        save_encoded(out_dir / "features" / name / "train", vecs, st.train.labels);
        save_encoded(out_dir / "features" / name / "test", st.test_features.at(name),
                     st.test.labels);
      }
  });

  run_stage("train-svm", res.timings, [&] {
    res.sets = evaluate_sets(cfg, st.train_features, st.train.labels, st.test_features,
                             st.test.labels, num_classes, save ? out_dir : fs::path{});
    if (save)
      for (const auto& name : feature_set_names())
        if (st.train_features.count(name)) record("svm_" + name, "svm_" + name + ".fvm");
    res.net_test_accuracy = accuracy_of(st.net, st.data.test);
  });
  return res;
}

}  // namespace lsdhm::harness
