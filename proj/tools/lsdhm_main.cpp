// lsdhm: command-line front end for the desk-scale hybrid model.
//
//   lsdhm run-all --out runs/a --set net.lambda=0.1
//   lsdhm train-net --config desk.cfg --out runs/b --threads 4
//
// Stage commands read and write artifacts in the --out directory, so
// train-net, fit-pca, fit-gmm, encode and train-svm can be chained.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "lsdhm/error.hpp"
#include "lsdhm/harness/config.hpp"
#include "lsdhm/harness/experiments.hpp"
#include "lsdhm/harness/pipeline.hpp"
#include "lsdhm/harness/results.hpp"
#include "lsdhm/model_io.hpp"

namespace fs = std::filesystem;
using namespace lsdhm;
using namespace lsdhm::harness;

namespace {

struct Options {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<unsigned> threads;
  std::string out = "lsdhm_run";
};

RunConfig resolve_config(const Options& o) {
  RunConfig cfg;
  if (!o.config_file.empty()) cfg = load_config(o.config_file);
  apply_overrides(cfg, o.overrides);
  if (o.threads) cfg.threads = *o.threads;
  if (cfg.threads == 0) throw ConfigError("run.threads must be at least 1");
  return cfg;
}

void finish(RunRecord& rec, const fs::path& out) {
  rec.hash_artifacts(out);
  write_run_json(out / "run.json", rec);
  fs::create_directories(out / "runs");
  write_run_json(out / "runs" / (rec.command + ".json"), rec);
}

void print_results(const std::vector<SetResult>& sets) {
  for (const auto& s : sets)
    std::printf("%-8s C=%-5g dim=%-6zu train %6s%%  test %6s%%\n", s.name.c_str(), s.c, s.dim,
                percent(s.train_accuracy).c_str(), percent(s.test_accuracy).c_str());
}

nn::ConvNet load_or_train_net(const RunConfig& cfg, const Dataset& data, const fs::path& out,
                              RunRecord& rec) {
  const fs::path p = out / "net.fvm";
  if (fs::exists(p)) {
    rec.artifacts["net"] = "net.fvm";
    return load_net(p).net;
  }
  nn::ConvNet net;
  run_stage("train-net", rec.timings, [&] {
    std::vector<nn::TrainLogRow> log;
    net = train_network(cfg, data.train, &log);
    save_net(p, net, train_config(cfg).resolved_aux_weights(net.spec().heads.size()));
    std::ofstream(out / "train_log.csv") << nn::train_log_csv(log);
  });
  rec.artifacts["net"] = "net.fvm";
  rec.artifacts["train_log"] = "train_log.csv";
  return net;
}

Dataset data_stage(const RunConfig& cfg, RunRecord& rec) {
  Dataset d;
  run_stage("data", rec.timings, [&] { d = load_dataset(cfg); });
  return d;
}

DescriptorSet sample_stage(const RunConfig& cfg, const nn::ConvNet& net, const Dataset& data,
                           RunRecord& rec) {
  DescriptorSet sample;
  run_stage("extract", rec.timings, [&] {
    const Extracted ex = extract(net, data.train, cfg.extract_layer, cfg.threads);
    sample = sample_descriptors(ex.maps, cfg.sample_cap, cfg.stage_seed("sample"));
  });
  return sample;
}

// Net, PCA and GMM from the run directory when present, fitted otherwise;
// then FC / FCV / fused features for both splits.
PipelineState prepare_state(const RunConfig& cfg, const fs::path& out, RunRecord& rec) {
  PipelineState st;
  st.data = data_stage(cfg, rec);
  st.net = load_or_train_net(cfg, st.data, out, rec);
  run_stage("extract", rec.timings, [&] {
    st.train = extract(st.net, st.data.train, cfg.extract_layer, cfg.threads);
    st.test = extract(st.net, st.data.test, cfg.extract_layer, cfg.threads);
  });
  if (fs::exists(out / "pca.fvm") && fs::exists(out / "gmm.fvm")) {
    st.pca = load_pca(out / "pca.fvm");
    st.gmm = load_gmm(out / "gmm.fvm");
  } else {
    DescriptorSet projected;
    run_stage("fit-pca", rec.timings, [&] {
      const DescriptorSet sample =
          sample_descriptors(st.train.maps, cfg.sample_cap, cfg.stage_seed("sample"));
      st.pca = fit_pca_stage(cfg, sample);
      projected = pca_project_all(st.pca, sample);
      save_pca(out / "pca.fvm", st.pca);
    });
    run_stage("fit-gmm", rec.timings, [&] {
      st.gmm = fit_gmm_stage(cfg, projected);
      save_gmm(out / "gmm.fvm", st.gmm);
    });
  }
  rec.artifacts["pca"] = "pca.fvm";
  rec.artifacts["gmm"] = "gmm.fvm";
  RunConfig enc = cfg;
  enc.pipeline_baselines = false;
  run_stage("encode", rec.timings, [&] {
    st.train_features = encode_features(enc, st.train, st.pca, st.gmm, nullptr);
    st.test_features = encode_features(enc, st.test, st.pca, st.gmm, nullptr);
  });
  return st;
}

int run_command(const std::string& command, const Options& opts) {
  const RunConfig cfg = resolve_config(opts);
  const fs::path out = opts.out;
  fs::create_directories(out);
  RunRecord rec = RunRecord::start(command, cfg);

  if (command == "gen-data") {
    const Dataset d = data_stage(cfg, rec);
    run_stage("write", rec.timings, [&] { save_dataset(out / "data", d); });
    rec.artifacts["data"] = "data";
    rec.metrics = {{"train_images", d.train.size()}, {"test_images", d.test.size()}};
    std::printf("wrote %zu train and %zu test images to %s\n", d.train.size(), d.test.size(),
                (out / "data").string().c_str());
  } else if (command == "train-net") {
    const Dataset d = data_stage(cfg, rec);
    if (fs::exists(out / "net.fvm")) fs::remove(out / "net.fvm");
    const nn::ConvNet net = load_or_train_net(cfg, d, out, rec);
    rec.net_test_accuracy = accuracy_of(net, d.test);
    std::printf("net test accuracy %s%%\n", percent(*rec.net_test_accuracy).c_str());
  } else if (command == "fit-pca") {
    const Dataset d = data_stage(cfg, rec);
    const nn::ConvNet net = load_net(out / "net.fvm").net;
    const DescriptorSet sample = sample_stage(cfg, net, d, rec);
    run_stage("fit-pca", rec.timings, [&] {
      const PcaModel pca = fit_pca_stage(cfg, sample);
      save_pca(out / "pca.fvm", pca);
      rec.metrics = {{"descriptors", sample.count()}, {"explained_variance", pca.explained_variance}};
    });
    rec.artifacts["pca"] = "pca.fvm";
  } else if (command == "fit-gmm") {
    const Dataset d = data_stage(cfg, rec);
    const nn::ConvNet net = load_net(out / "net.fvm").net;
    const PcaModel pca = load_pca(out / "pca.fvm");
    const DescriptorSet projected = pca_project_all(pca, sample_stage(cfg, net, d, rec));
    run_stage("fit-gmm", rec.timings, [&] {
      EmTrace trace;
      save_gmm(out / "gmm.fvm", fit_gmm_stage(cfg, projected, &trace));
      rec.metrics = {{"iterations", trace.iterations},
                     {"converged", trace.converged},
                     {"log_likelihood", trace.log_likelihood}};
    });
    rec.artifacts["gmm"] = "gmm.fvm";
    if (cfg.pipeline_baselines) {
      run_stage("fit-bow", rec.timings,
                [&] { save_bow(out / "bow.fvm", fit_bow_stage(cfg, projected)); });
      rec.artifacts["bow"] = "bow.fvm";
    }
  } else if (command == "encode") {
    const Dataset d = data_stage(cfg, rec);
    const nn::ConvNet net = load_net(out / "net.fvm").net;
    const PcaModel pca = load_pca(out / "pca.fvm");
    const GmmModel gmm = load_gmm(out / "gmm.fvm");
    std::optional<BowCodebook> bow;
    if (cfg.pipeline_baselines) bow = load_bow(out / "bow.fvm");
    run_stage("encode", rec.timings, [&] {
      for (const auto& [split, ds] : {std::pair{"train", &d.train}, std::pair{"test", &d.test}}) {
        const Extracted ex = extract(net, *ds, cfg.extract_layer, cfg.threads);
        const FeatureTable t = encode_features(cfg, ex, pca, gmm, bow ? &*bow : nullptr);
        for (const auto& [name, vecs] : t) save_encoded(out / "features" / name / split, vecs, ex.labels);
      }
    });
    rec.artifacts["features"] = "features";
  } else if (command == "train-svm") {
    const int num_classes = static_cast<int>(load_net(out / "net.fvm").net.spec().num_classes);
    FeatureTable train, test;
    std::vector<int> ytr, yte;
    run_stage("load-features", rec.timings, [&] {
      for (const auto& name : feature_set_names()) {
        if (!fs::exists(out / "features" / name)) continue;
        auto [xa, ya] = load_encoded(out / "features" / name / "train");
        auto [xb, yb] = load_encoded(out / "features" / name / "test");
        train[name] = std::move(xa);
        test[name] = std::move(xb);
        ytr = std::move(ya);
        yte = std::move(yb);
      }
      if (train.empty()) throw DataError("no encoded features under " + (out / "features").string());
    });
    run_stage("train-svm", rec.timings, [&] {
      rec.results = evaluate_sets(cfg, train, ytr, test, yte, num_classes, out);
    });
    for (const auto& [name, v] : train) rec.artifacts["svm_" + name] = "svm_" + name + ".fvm";
  } else if (command == "run-all") {
    const PipelineResult res = run_pipeline(cfg, out);
    rec.results = res.sets;
    rec.timings = res.timings;
    rec.artifacts = res.artifacts;
    rec.artifacts["features"] = "features";
    rec.net_test_accuracy = res.net_test_accuracy;
    rec.metrics = {{"gmm_iterations", res.gmm_trace.iterations},
                   {"gmm_log_likelihood", res.gmm_trace.log_likelihood}};
  } else if (command == "exp-pairs") {
    const PipelineState st = prepare_state(cfg, out, rec);
    std::vector<PairRow> rows;
    run_stage("pairs", rec.timings, [&] { rows = experiment_pairs(cfg, st); });
    write_csv(out / "pairs.csv", pairs_table(rows));
    rec.artifacts["pairs"] = "pairs.csv";
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) {
      j.push_back({{"class_a", r.class_a}, {"class_b", r.class_b}, {"error_fc", r.error_fc},
                   {"error_conv", r.error_conv}, {"error_both", r.error_both}});
      std::printf("pair %d/%d  error fc %6.2f  conv %6.2f  both %6.2f\n", r.class_a, r.class_b,
                  r.error_fc, r.error_conv, r.error_both);
    }
    rec.metrics = {{"pairs", j}};
  } else if (command == "exp-occlude") {
    const Dataset d = data_stage(cfg, rec);
    const nn::ConvNet net = load_or_train_net(cfg, d, out, rec);
    OcclusionStudy s;
    run_stage("occlusion", rec.timings, [&] { s = occlusion_study(cfg, net, d, cfg.occlusion_images); });
    write_csv(out / "occlusion.csv", occlusion_table(s));
    rec.artifacts["occlusion"] = "occlusion.csv";
    rec.metrics = {{"images", s.images},
                   {"glyph_mean", s.glyph_mean},
                   {"background_mean", s.background_mean},
                   {"fraction_glyph_larger", s.fraction_glyph_larger}};
    std::printf("glyph occlusion larger on %.0f%% of %zu images\n", 100.0 * s.fraction_glyph_larger,
                s.images.size());
  } else if (command == "exp-stats") {
    const Dataset d = data_stage(cfg, rec);
    const nn::ConvNet net = load_or_train_net(cfg, d, out, rec);
    ActivationStats s;
    run_stage("stats", rec.timings, [&] { s = experiment_activation_stats(cfg, net, d); });
    write_csv(out / "activation_stats.csv", activation_table(s));
    rec.artifacts["activation_stats"] = "activation_stats.csv";
    rec.metrics = {{"q", s.q},
                   {"fc_histogram", s.fc_histogram},
                   {"conv_histogram", s.conv_histogram},
                   {"total_variation", s.total_variation}};
    std::printf("top %zu images, total variation distance fc vs conv %.4f\n", s.q,
                s.total_variation);
  }

  if (!rec.results.empty()) {
    write_csv(out / "results.csv", results_table(rec.results));
    write_csv(out / "per_class.csv", per_class_table(rec.results));
    rec.artifacts["results"] = "results.csv";
    rec.artifacts["per_class"] = "per_class.csv";
    print_results(rec.results);
  }
  if (rec.net_test_accuracy && command == "run-all")
    std::printf("net test accuracy %s%%\n", percent(*rec.net_test_accuracy).c_str());
  finish(rec, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Locally-supervised deep hybrid model: train, encode, classify, experiment"};
  app.require_subcommand(1);
  Options opts;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-data", "generate the synthetic scene dataset as PPM files"},
      {"train-net", "train the network (with LCS head unless net.lcs=false)"},
      {"fit-pca", "fit PCA on sampled conv descriptors"},
      {"fit-gmm", "fit the GMM (and BoW codebook) on projected descriptors"},
      {"encode", "encode FC, FCV, fused and baseline features"},
      {"train-svm", "train and evaluate SVMs on encoded features"},
      {"run-all", "run every stage and report accuracies"},
      {"exp-pairs", "ambiguous pair errors for FC, conv and fused features"},
      {"exp-occlude", "conv map changes under glyph and background occlusion"},
      {"exp-stats", "class distribution of the most activated images"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opts.config_file, "key=value configuration file")
        ->check(CLI::ExistingFile);
    sub->add_option("--set", opts.overrides, "override a config key, e.g. --set gmm.k=32");
    sub->add_option("--threads", opts.threads, "worker threads (1 is bit-reproducible)");
    sub->add_option("--out", opts.out, "run directory for artifacts and results")
        ->capture_default_str();
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run_command(command, opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
