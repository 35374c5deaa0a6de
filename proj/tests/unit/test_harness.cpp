#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <map>
#include <fstream>

#include "lsdhm/binary_io.hpp"
#include "lsdhm/error.hpp"
#include "lsdhm/harness/config.hpp"
#include "lsdhm/harness/experiments.hpp"
#include "lsdhm/harness/pipeline.hpp"
#include "lsdhm/harness/ppm.hpp"
#include "lsdhm/harness/results.hpp"
#include "lsdhm/harness/scenes.hpp"
#include "lsdhm/model_io.hpp"
#include "oracles.hpp"

using namespace lsdhm;
using namespace lsdhm::harness;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lsdhm_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

// Small, quick pipeline settings.
RunConfig quick_config() {
  return parse_config(
      "data.per_class = 10\n"
      "net.epochs = 1\n"
      "net.batch = 16\n"
      "pca.m = 8\n"
      "gmm.k = 4\n"
      "gmm.max_iters = 20\n"
      "bow.k = 8\n"
      "svm.epochs = 10\n"
      "extract.sample_cap = 4000\n");
}

double mean_abs_diff(const Tensor3& a, const Tensor3& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a.data()[i] - b.data()[i]);
  return s / static_cast<double>(a.size());
}

}  // namespace

TEST_CASE("config parsing") {
  const RunConfig c = parse_config("# comment\n\ngmm.k = 32  \nnet.lcs=false\nsvm.c=0.1 # trailing\n");
  CHECK(c.gmm_k == 32);
  CHECK(!c.net_lcs);
  CHECK(c.svm_c == 0.1);
  CHECK_THROWS_AS(parse_config("gmm.kk = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("gmm.k = three\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("gmm.k 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("net.lcs = maybe\n"), ConfigError);

  RunConfig o;
  apply_overrides(o, {"pca.m=4", "run.seed=9"});
  CHECK(o.pca_m == 4);
  CHECK(o.resolved_seeds().at("gmm") == o.stage_seed("gmm"));
  RunConfig p = o;
  p.gmm_seed = 1234;
  CHECK(p.stage_seed("gmm") == 1234);
  CHECK(p.stage_seed("net") == o.stage_seed("net"));
  CHECK(o.stage_seed("net") != o.stage_seed("gmm"));

  const RunConfig back = parse_config(format_config(p));
  CHECK(back.entries() == p.entries());
}

TEST_CASE("ppm decoding and manifests") {
  const std::string header = "P6\n# made by hand\n2 2\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  for (std::uint8_t v : {0, 51, 102, 153, 204, 255, 1, 2, 3, 250, 128, 64}) bytes.push_back(v);
  const Tensor3 t = decode_ppm(bytes);
  CHECK(t.height() == 2);
  CHECK(t.width() == 2);
  CHECK(t(0, 0, 1) == 51.0 / 255.0);
  CHECK(t(0, 1, 2) == 1.0);
  CHECK(t(1, 1, 0) == 250.0 / 255.0);
  CHECK(decode_ppm(encode_ppm(t)) == t);
  bytes.pop_back();
  CHECK_THROWS_AS(decode_ppm(bytes), DataError);

  const auto m = parse_manifest("a.ppm\t3\n\nb.ppm\t0\n");
  REQUIRE(m.size() == 2);
  CHECK(m[1].filename == "b.ppm");
  CHECK(parse_manifest(format_manifest(m))[0].label == 3);

  const fs::path dir = fresh_dir("ppm");
  write_ppm(dir / "a.ppm", t);
  write_text(dir / "empty.tsv", "\n");
  write_text(dir / "missing.tsv", "a.ppm\t0\nghost.ppm\t1\n");
  write_text(dir / "label.tsv", "a.ppm\t7\n");
  write_text(dir / "ok.tsv", "a.ppm\t1\n");
  CHECK_THROWS_AS(ingest_images(dir, dir / "empty.tsv", 2), DataError);
  CHECK_THROWS_WITH_AS(ingest_images(dir, dir / "missing.tsv", 2), doctest::Contains("ghost.ppm"),
                       DataError);
  CHECK_THROWS_WITH_AS(ingest_images(dir, dir / "label.tsv", 2), doctest::Contains("a.ppm"), DataError);
  const LabeledDataset d = ingest_images(dir, dir / "ok.tsv", 2);
  CHECK(d.size() == 1);
  CHECK(d[0].image == t);
}

TEST_CASE("csv and run records round-trip") {
  CsvTable t{{"a", "b"}, {{"1", "x"}, {"2.50", "nan"}}};
  CHECK(parse_csv(format_csv(t)) == t);
  CHECK(t.column("b") == 1);
  CHECK_THROWS_AS(t.column("c"), DataError);
  CHECK(percent(0.12345) == "12.35");
  CHECK(percent(NAN) == "nan");

  RunConfig cfg;
  RunRecord r = RunRecord::start("run-all", cfg);
  r.artifacts["net"] = "net.fvm";
  r.hashes["net"] = "0123456789abcdef";
  r.timings = {{"data", 0.5}, {"train-net", 12.25}};
  r.results = {{"fcv", 1.0, 512, 0.9, 0.8125, {1.0, NAN, 0.5}}};
  r.net_test_accuracy = 0.75;
  r.metrics["fraction"] = 0.85;
  const RunRecord back = run_record_from_json(nlohmann::json::parse(to_json(r).dump()));
  CHECK(to_json(back) == to_json(r));
  CHECK(std::map(back.config.begin(), back.config.end()) == std::map(r.config.begin(), r.config.end()));
  CHECK(back.seeds.at("run") == cfg.seed);
  CHECK(std::isnan(back.results[0].per_class[1]));
  CHECK(back.results[0].test_accuracy == 0.8125);
  CHECK(fnv1a_hex(std::vector<std::uint8_t>{}) == "cbf29ce484222325");
  const std::string a = "a";
  CHECK(fnv1a_hex(std::vector<std::uint8_t>(a.begin(), a.end())) == "af63dc4c8601ec8c");
}

TEST_CASE("scene generation") {
  const std::size_t N = 200;
  const MicroSceneSpec spec = MicroSceneSpec::default_spec(5);
  validate(spec);
  const SceneSplit a = generate_dataset(spec, N), b = generate_dataset(spec, N);
  REQUIRE(a.train.size() == b.train.size());
  CHECK(a.train.size() == 8 * N);
  CHECK(a.test.size() == 2 * N);
  for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].image == b.train[i].image);

  // per-class mean images
  std::vector<Tensor3> mean(10, Tensor3(32, 32, 3));
  std::vector<double> count(10, 0.0);
  for (const auto& it : a.train.items()) {
    auto m = mean[static_cast<std::size_t>(it.label)].data();
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += it.image.data()[i];
    count[static_cast<std::size_t>(it.label)] += 1.0;
  }
  for (std::size_t c = 0; c < 10; ++c)
    for (double& v : mean[c].data()) v /= count[c];
  auto paired = [&](int x, int y) {
    for (auto [p, q] : spec.ambiguous_pairs)
      if ((p == x && q == y) || (p == y && q == x)) return true;
    return false;
  };
  double other = 0.0;
  int n_other = 0;
  for (int x = 0; x < 10; ++x)
    for (int y = x + 1; y < 10; ++y)
      if (!paired(x, y)) {
        other += mean_abs_diff(mean[static_cast<std::size_t>(x)], mean[static_cast<std::size_t>(y)]);
        ++n_other;
      }
  other /= n_other;
  CHECK(spec.ambiguous_pairs.size() == 3);
  for (auto [p, q] : spec.ambiguous_pairs) {
    const double d = mean_abs_diff(mean[static_cast<std::size_t>(p)], mean[static_cast<std::size_t>(q)]);
    INFO("pair " << p << "/" << q << " " << d << " vs " << other);
    CHECK(d < 0.1 * other);
  }

  MicroSceneSpec flat = spec;
  flat.classes.resize(1);
  flat.ambiguous_pairs.clear();
  flat.noise = 0.0;
  flat.glyphs_min = flat.glyphs_max = 0;
  flat.layout_jitter = 0.0;
  const SceneSplit f = generate_dataset(flat, 10);
  for (const auto& it : f.train.items()) CHECK(it.image == f.train[0].image);
  for (const auto& it : f.test.items()) CHECK(it.image == f.train[0].image);

  MicroSceneSpec broken = spec;
  broken.ambiguous_pairs.push_back({0, 7});
  CHECK_THROWS_AS(validate(broken), ConfigError);
  CHECK_THROWS_AS(generate_dataset(spec, 1), ConfigError);
}

TEST_CASE("pipeline on a single class is always right") {
  RunConfig cfg = quick_config();
  cfg.data_classes = 1;
  const PipelineResult r = run_pipeline(cfg);
  for (const auto& name : feature_set_names()) {
    CHECK(r.set(name).test_accuracy == 1.0);
    CHECK(r.set(name).train_accuracy == 1.0);
  }
}

TEST_CASE("lambda zero and no head give identical results") {
  RunConfig a = quick_config();
  a.data_classes = 4;
  a.pipeline_baselines = false;
  a.net_lambda = 0.0;
  RunConfig b = a;
  b.net_lcs = false;
  PipelineState sa, sb;
  const PipelineResult ra = run_pipeline(a, {}, &sa), rb = run_pipeline(b, {}, &sb);
  REQUIRE(ra.sets.size() == rb.sets.size());
  for (std::size_t i = 0; i < ra.sets.size(); ++i) {
    CHECK(ra.sets[i].name == rb.sets[i].name);
    CHECK(ra.sets[i].test_accuracy == rb.sets[i].test_accuracy);
  }
  CHECK(sa.train_features.at("fused") == sb.train_features.at("fused"));
}

TEST_CASE("saved models reproduce the encoded features") {
  RunConfig cfg = quick_config();
  cfg.data_classes = 3;
  const fs::path out = fresh_dir("pipeline");
  PipelineState st;
  run_pipeline(cfg, out, &st);
  const NetRecord net = load_net(out / "net.fvm");
  const PcaModel pca = load_pca(out / "pca.fvm");
  const GmmModel gmm = load_gmm(out / "gmm.fvm");
  const BowCodebook bow = load_bow(out / "bow.fvm");
  const Extracted ex = extract(net.net, st.data.test, cfg.extract_layer);
  const FeatureTable again = encode_features(cfg, ex, pca, gmm, &bow);
  for (const auto& name : feature_set_names()) {
    const auto& want = st.test_features.at(name);
    const auto& got = again.at(name);
    REQUIRE(got.size() == want.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i)
      for (std::size_t j = 0; j < got[i].size(); ++j) worst = std::max(worst, std::abs(got[i][j] - want[i][j]));
    INFO(name);
    CHECK(worst <= 1e-12);
  }
  // features on disk are float32 copies of the same vectors
  const auto [vecs, labels] = load_encoded(out / "features" / "fcv" / "test");
  CHECK(labels == st.test.labels);
  CHECK(std::abs(vecs[0][3] - st.test_features.at("fcv")[0][3]) < 1e-6);
}

TEST_CASE("stage errors carry the stage name") {
  RunConfig cfg = quick_config();
  cfg.data_dir = (fs::temp_directory_path() / "lsdhm_unit_nowhere").string();
  CHECK_THROWS_WITH_AS(run_pipeline(cfg), doctest::Contains("stage data"), DataError);
  cfg = quick_config();
  cfg.extract_layer = 9;
  CHECK_THROWS_AS(run_pipeline(cfg), Error);
}

TEST_CASE("indistinguishable pair stays near chance") {
  MicroSceneSpec spec = MicroSceneSpec::default_spec(3);
  spec.classes = {spec.classes[0], spec.classes[0]};
  spec.ambiguous_pairs = {{0, 1}};
  const SceneSplit split = generate_dataset(spec, 150);
  Dataset data;
  data.train = split.train;
  data.test = split.test;
  const fs::path dir = fresh_dir("twins");
  save_dataset(dir, data);
  RunConfig cfg = quick_config();
  cfg.data_dir = dir.string();
  cfg.data_num_labels = 2;
  cfg.pipeline_baselines = false;
  PipelineState st;
  run_pipeline(cfg, {}, &st);
  st.data.ambiguous_pairs = {{0, 1}};
  const auto rows = experiment_pairs(cfg, st);
  REQUIRE(rows.size() == 1);
  for (double e : {rows[0].error_fc, rows[0].error_conv, rows[0].error_both}) {
    CHECK(e >= 40.0);
    CHECK(e <= 60.0);
  }
  st.data.ambiguous_pairs.clear();
  CHECK_THROWS_AS(experiment_pairs(cfg, st), ConfigError);
}

TEST_CASE("occlusion examples") {
  const nn::ConvNet net(nn::ConvNetSpec::desk_default(10), 2);
  oracle::Gen gen(51);
  const Tensor3 img = gen.tensor(32, 32, 3, 0.0, 1.0);
  const auto rows = experiment_occlusion(net, 2, img, {Rect{4, 4, 4, 9}, Rect{0, 0, 32, 32}, Rect{3, 3, 10, 10}});
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].mean_l2 == 0.0);
  CHECK(rows[1].mean_l2 >= 0.0);
  CHECK(rows[2].mean_l2 > 0.0);
  CHECK(rows[1].map_l2.size() == 32);
  CHECK_THROWS_AS(experiment_occlusion(net, 2, img, {Rect{0, 0, 33, 4}}), ConfigError);

  const auto bg = background_rects(32, 32, 7, 5, {Rect{0, 0, 16, 32}}, 6, 1);
  CHECK(bg.size() == 6);
  for (const auto& r : bg) CHECK(r.h0 >= 16);
  CHECK(background_rects(32, 32, 7, 5, {Rect{0, 0, 16, 32}}, 6, 1).front().w0 == bg.front().w0);
}

TEST_CASE("activation statistics") {
  CHECK(top_q({1.0, 1.0, 1.0, 1.0}, 2) == std::vector<std::size_t>{0, 1});
  CHECK(top_q({0.1, 0.7, 0.7, 0.3}, 3) == std::vector<std::size_t>{1, 2, 3});
  oracle::Gen gen(52);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = gen.index(1, 60), q = gen.index(1, n);
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(gen.index(0, 4));
    const ActivationStats s = activation_stats(gen.vec(n), gen.vec(n), labels, 5, q);
    std::size_t fc = 0, conv = 0;
    for (auto v : s.fc_histogram) fc += v;
    for (auto v : s.conv_histogram) conv += v;
    CHECK(fc == q);
    CHECK(conv == q);
    CHECK(s.total_variation >= 0.0);
    CHECK(s.total_variation <= 1.0);
  }
  const ActivationStats same = activation_stats({1, 2, 3}, {1, 2, 3}, {0, 1, 2}, 3, 2);
  CHECK(same.total_variation == 0.0);
  CHECK_THROWS_AS(activation_stats({1, 2}, {1}, {0, 1}, 2, 1), ShapeError);
}
