#include <doctest.h>

#include <cmath>
#include <limits>

#include "lsdhm/error.hpp"
#include "lsdhm/fisher.hpp"
#include "lsdhm/svm.hpp"
#include "oracles.hpp"

using namespace lsdhm;
using oracle::Mat;
using oracle::Vec;

namespace {

struct Problem {
  Mat x;
  std::vector<int> y;
};

// Gaussian blobs around class-specific centers.
Problem blobs(oracle::Gen& gen, std::size_t per_class, const Mat& centers, double sd) {
  Problem p;
  for (std::size_t i = 0; i < per_class; ++i)
    for (std::size_t c = 0; c < centers.size(); ++c) {
      Vec v(centers[c].size());
      for (std::size_t j = 0; j < v.size(); ++j) v[j] = gen.normal(centers[c][j], sd);
      p.x.push_back(v);
      p.y.push_back(static_cast<int>(c));
    }
  return p;
}

int naive_predict(const SvmModel& m, const Vec& x) {
  int best = 0;
  double best_s = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < m.num_classes; ++k) {
    double s = m.biases[k];
    for (std::size_t j = 0; j < m.dim; ++j) s += m.weights[k * m.dim + j] * x[j];
    if (s > best_s) {
      best_s = s;
      best = static_cast<int>(k);
    }
  }
  return best;
}

}  // namespace

TEST_CASE("fuse examples") {
  const Vec fcv = {0.6, 0.8, 0, 0, 0, 0}, fc = {0, 1, 0, 0};
  const LsDhmVector v = fuse(fcv, fc);
  CHECK(v.values.size() == 10);
  CHECK(std::abs(l2_norm(v.values) - std::sqrt(2.0)) < 1e-12);

  oracle::Gen gen(31);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec a = gen.vec(gen.index(1, 20)), b = gen.vec(gen.index(1, 10));
    Vec big = b;
    for (auto& x : big) x *= 1000.0;
    const LsDhmVector f = fuse(a, b), g = fuse(a, big);
    for (std::size_t i = 0; i < f.values.size(); ++i) CHECK(std::abs(f.values[i] - g.values[i]) < 1e-10);
    CHECK(std::abs(l2_norm(f.fcv_block()) - 1.0) < 1e-10);
    CHECK(std::abs(l2_norm(f.fc_block()) - 1.0) < 1e-10);
    Vec na = a;
    l2_normalize_inplace(na);
    CHECK(Vec(f.fcv_block().begin(), f.fcv_block().end()) == na);
  }

  const LsDhmVector z = fuse(Vec{0, 0}, Vec{3, 4});
  CHECK(z.fcv_zero);
  CHECK(!z.fc_zero);
  CHECK(z.values == Vec{0, 0, 0.6, 0.8});
  CHECK_THROWS_AS(fuse(Vec{}, Vec{1}), ShapeError);
}

TEST_CASE("separable two-class toy is learned exactly") {
  const Mat x = {{2, 2}, {3, 1}, {2.5, 3}, {-2, -2}, {-1, -3}, {-3, -1}};
  const std::vector<int> y = {0, 0, 0, 1, 1, 1};
  SvmConfig cfg;
  cfg.c = 10.0;
  const SvmModel m = train_svm(x, y, cfg);
  CHECK(m.num_classes == 2);
  CHECK(accuracy(m, x, y) == 1.0);
}

TEST_CASE("duplicating every feature leaves predictions unchanged") {
  // The duplicated problem is regularized differently, so only the labels of
  // the training inputs are compared.
  oracle::Gen gen(32);
  const Problem p = blobs(gen, 30, {{0, 0}, {4, 0}, {0, 4}}, 0.5);
  Mat dup;
  for (const auto& v : p.x) {
    Vec d = v;
    d.insert(d.end(), v.begin(), v.end());
    dup.push_back(d);
  }
  const SvmModel a = train_svm(p.x, p.y, SvmConfig{}), b = train_svm(dup, p.y, SvmConfig{});
  for (std::size_t i = 0; i < p.x.size(); ++i) CHECK(predict(a, p.x[i]).label == predict(b, dup[i]).label);
}

TEST_CASE("SGD objective is close to a grid-search optimum") {
  oracle::Gen gen(33);
  const Problem p = blobs(gen, 7, {{-1, 0}, {1, 0.5}, {0, -1.5}}, 0.6);
  Mat x(p.x.begin(), p.x.begin() + 20);
  std::vector<int> y(p.y.begin(), p.y.begin() + 20);
  SvmConfig cfg;
  cfg.epochs = 200;
  const SvmModel m = train_svm(x, y, cfg);
  const double lambda = 1.0 / (cfg.c * 20.0);
  for (std::size_t k = 0; k < 3; ++k) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = -40; i <= 40; ++i)
      for (int j = -40; j <= 40; ++j)
        for (int l = -40; l <= 40; ++l) {
          const double w0 = 0.1 * i, w1 = 0.1 * j, b = 0.1 * l;
          double obj = 0.5 * lambda * (w0 * w0 + w1 * w1);
          for (std::size_t t = 0; t < 20; ++t) {
            const double s = (y[t] == static_cast<int>(k) ? 1.0 : -1.0);
            obj += std::max(0.0, 1.0 - s * (w0 * x[t][0] + w1 * x[t][1] + b)) / 20.0;
          }
          best = std::min(best, obj);
        }
    const double got = svm_class_objective(m, k, x, y);
    INFO("class " << k << " sgd " << got << " grid " << best);
    CHECK(got <= 1.05 * best);
  }
}

TEST_CASE("prediction examples and oracle") {
  SvmModel zero{3, 2, 1.0, Vec(6, 0.0), Vec(3, 0.0)};
  CHECK(predict(zero, Vec{1, 2}).label == 0);
  CHECK_THROWS_AS(predict(zero, Vec{1}), ShapeError);

  oracle::Gen gen(34);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = gen.index(2, 6), d = gen.index(1, 8);
    SvmModel m{k, d, 1.0, gen.vec(k * d), gen.vec(k)};
    const Vec x = gen.vec(d, -3, 3);
    const Prediction pr = predict(m, x);
    CHECK(pr.label == naive_predict(m, x));
    SvmModel scaled = m;
    const double c = gen.uniform(0.01, 100.0);
    for (auto& w : scaled.weights) w *= c;
    for (auto& b : scaled.biases) b *= c;
    CHECK(predict(scaled, x).label == pr.label);
  }
}

TEST_CASE("train_svm is reproducible") {
  oracle::Gen gen(35);
  const Problem p = blobs(gen, 20, {{0, 0, 1}, {2, 1, 0}, {1, 2, 2}, {-1, 1, 0}}, 1.0);
  SvmConfig cfg;
  cfg.seed = 5;
  const SvmModel a = train_svm(p.x, p.y, cfg);
  CHECK(train_svm(p.x, p.y, cfg) == a);
  cfg.threads = 4;
  CHECK(train_svm(p.x, p.y, cfg) == a);
  for (double w : a.weights) CHECK(std::isfinite(w));
}

TEST_CASE("train_svm preconditions") {
  const Mat x = {{1, 2}, {2, 1}};
  CHECK_THROWS_AS(train_svm(x, std::vector<int>{1, 1}, SvmConfig{}), ConfigError);
  CHECK_THROWS_AS(train_svm(x, std::vector<int>{0}, SvmConfig{}), ShapeError);
  CHECK_THROWS_AS(train_svm(Mat{{1, 2}, {1}}, std::vector<int>{0, 1}, SvmConfig{}), ShapeError);
  SvmConfig bad;
  bad.c = 0.0;
  CHECK_THROWS_AS(train_svm(x, std::vector<int>{0, 1}, bad), ConfigError);
}
