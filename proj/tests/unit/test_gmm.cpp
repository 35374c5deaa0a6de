#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lsdhm/error.hpp"
#include "lsdhm/gmm.hpp"
#include "lsdhm/kmeans.hpp"
#include "oracles.hpp"

using namespace lsdhm;
using oracle::Mat;
using oracle::Vec;

namespace {

Mat mixture_sample(oracle::Gen& gen, const GmmModel& g, std::size_t t) {
  Mat out;
  for (std::size_t i = 0; i < t; ++i) {
    double u = gen.uniform(), run = 0.0;
    std::size_t k = 0;
    for (; k + 1 < g.num_components; ++k) {
      run += g.weights[k];
      if (u < run) break;
    }
    Vec x(g.dim);
    for (std::size_t j = 0; j < g.dim; ++j) x[j] = gen.normal(g.mean(k)[j], g.stddev(k)[j]);
    out.push_back(x);
  }
  return out;
}

// One EM step written from the textbook update rules.
GmmModel em_step(const GmmModel& g, const Mat& xs) {
  const std::size_t kn = g.num_components, m = g.dim;
  Vec s0(kn, 0.0), s1(kn * m, 0.0), s2(kn * m, 0.0);
  for (const auto& x : xs) {
    const Vec gamma = oracle::gmm_posteriors(g, x);
    for (std::size_t k = 0; k < kn; ++k) {
      s0[k] += gamma[k];
      for (std::size_t j = 0; j < m; ++j) {
        s1[k * m + j] += gamma[k] * x[j];
        s2[k * m + j] += gamma[k] * x[j] * x[j];
      }
    }
  }
  GmmModel out = g;
  double total = 0.0;
  for (std::size_t k = 0; k < kn; ++k) {
    out.weights[k] = std::max(s0[k] / static_cast<double>(xs.size()), g.weight_floor);
    total += out.weights[k];
    for (std::size_t j = 0; j < m; ++j) {
      const double mu = s1[k * m + j] / s0[k];
      out.means[k * m + j] = mu;
      out.stddevs[k * m + j] = std::sqrt(std::max(s2[k * m + j] / s0[k] - mu * mu, g.variance_floor));
    }
  }
  for (auto& w : out.weights) w /= total;
  return out;
}

EmConfig fixed_iterations(std::size_t iters, std::uint64_t seed) {
  EmConfig cfg;
  cfg.max_iters = iters;
  cfg.tol = 1e-300;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("one component recovers sample mean and variance") {
  oracle::Gen gen(11);
  Mat x;
  for (int i = 0; i < 400; ++i) x.push_back({gen.normal(2.0, 0.5), gen.normal(-1.0, 3.0)});
  const GmmModel g = fit_gmm(oracle::to_set(x), 1, EmConfig{});
  const Vec mean = oracle::mean_of(x);
  const Mat cov = oracle::covariance(x);
  CHECK(g.weights[0] == doctest::Approx(1.0));
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(std::abs(g.means[j] - mean[j]) < 1e-10);
    CHECK(std::abs(g.stddevs[j] * g.stddevs[j] - cov[j][j]) < 1e-9);
  }
}

TEST_CASE("two well separated clusters are recovered") {
  oracle::Gen gen(12);
  Mat x;
  for (int i = 0; i < 300; ++i) x.push_back({gen.normal(-5, 1), gen.normal(0, 1)});
  for (int i = 0; i < 100; ++i) x.push_back({gen.normal(5, 0.5), gen.normal(0, 0.5)});
  const GmmModel g = fit_gmm(oracle::to_set(x), 2, EmConfig{});
  const std::size_t left = g.means[0] < g.means[2] ? 0 : 1, right = 1 - left;
  CHECK(g.weights[left] == doctest::Approx(0.75).epsilon(0.01));
  CHECK(g.mean(left)[0] == doctest::Approx(-5).epsilon(0.05));
  CHECK(g.mean(right)[0] == doctest::Approx(5).epsilon(0.05));
  CHECK(g.stddev(right)[0] == doctest::Approx(0.5).epsilon(0.15));
}

TEST_CASE("an EM iteration matches the textbook update") {
  oracle::Gen gen(13);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t m = trial == 0 ? 1 : gen.index(1, 4);
    const std::size_t k = trial == 0 ? 3 : gen.index(2, 4);
    const Mat x = mixture_sample(gen, gen.gmm(k, m, 3.0), 300);
    const auto set = oracle::to_set(x);
    const GmmModel before = fit_gmm(set, k, fixed_iterations(3, 7));
    const GmmModel after = fit_gmm(set, k, fixed_iterations(4, 7));
    const GmmModel want = em_step(before, x);
    for (std::size_t i = 0; i < k; ++i) CHECK(std::abs(after.weights[i] - want.weights[i]) < 1e-10);
    for (std::size_t i = 0; i < k * m; ++i) {
      CHECK(std::abs(after.means[i] - want.means[i]) < 1e-9);
      CHECK(std::abs(after.stddevs[i] - want.stddevs[i]) < 1e-9);
    }
  }
}

TEST_CASE("posterior examples") {
  GmmModel one;
  one.num_components = 1;
  one.dim = 2;
  one.weights = {1.0};
  one.means = {0, 0};
  one.stddevs = {1, 2};
  CHECK(posteriors(one, Vec{40.0, -3.0}) == Vec{1.0});

  GmmModel sym;
  sym.num_components = 2;
  sym.dim = 1;
  sym.weights = {0.5, 0.5};
  sym.means = {-1.0, 1.0};
  sym.stddevs = {0.7, 0.7};
  const Vec mid = posteriors(sym, Vec{0.0});
  CHECK(mid[0] == doctest::Approx(0.5));
  CHECK(mid[1] == doctest::Approx(0.5));

  // far in the tail the direct density underflows but log space does not
  const Vec far = posteriors(sym, Vec{60.0});
  CHECK(far[1] == doctest::Approx(1.0));
  CHECK(std::isfinite(far[0]));
}

TEST_CASE("posteriors agree with direct density ratios") {
  oracle::Gen gen(14);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = gen.index(1, 6), m = gen.index(1, 5);
    const GmmModel g = gen.gmm(k, m);
    const Vec x = gen.vec(m, -2, 2);
    const Vec got = posteriors(g, x), want = oracle::gmm_posteriors(g, x);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(std::abs(got[i] - want[i]) < 1e-9);
      CHECK(got[i] >= 0.0);
      sum += got[i];
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("log-likelihood examples and oracle") {
  GmmModel g;
  g.num_components = 1;
  g.dim = 3;
  g.weights = {1.0};
  g.means = {1, 2, 3};
  g.stddevs = {1, 1, 1};
  const Mat at_mean = {{1, 2, 3}};
  CHECK(log_likelihood(g, oracle::to_set(at_mean)) ==
        doctest::Approx(-1.5 * std::log(2 * std::numbers::pi)));

  oracle::Gen gen(15);
  for (int trial = 0; trial < 50; ++trial) {
    const GmmModel r = gen.gmm(gen.index(1, 5), gen.index(1, 4));
    Mat x;
    for (int i = 0; i < 30; ++i) x.push_back(gen.vec(r.dim, -2, 2));
    const double ll = log_likelihood(r, oracle::to_set(x));
    CHECK(std::abs(ll - oracle::gmm_mean_log_likelihood(r, x)) < 1e-9);
    Mat twice = x;
    twice.insert(twice.end(), x.begin(), x.end());
    CHECK(std::abs(log_likelihood(r, oracle::to_set(twice)) - ll) < 1e-12);
  }
}

TEST_CASE("EM never decreases the log-likelihood") {
  oracle::Gen gen(16);
  for (int trial = 0; trial < 5; ++trial) {
    const Mat x = mixture_sample(gen, gen.gmm(4, 3, 2.0), 500);
    EmTrace trace;
    fit_gmm(oracle::to_set(x), 4, fixed_iterations(30, trial), &trace);
    REQUIRE(trace.log_likelihood.size() == 31);
    for (std::size_t i = 1; i < trace.log_likelihood.size(); ++i)
      CHECK(trace.log_likelihood[i] >= trace.log_likelihood[i - 1] - 1e-9);
  }
}

TEST_CASE("fit_gmm is reproducible and keeps its invariants") {
  oracle::Gen gen(17);
  const Mat x = mixture_sample(gen, gen.gmm(3, 2, 2.0), 200);
  EmConfig cfg;
  cfg.seed = 99;
  const GmmModel a = fit_gmm(oracle::to_set(x), 5, cfg);
  const GmmModel b = fit_gmm(oracle::to_set(x), 5, cfg);
  CHECK(a == b);
  cfg.threads = 4;
  CHECK(fit_gmm(oracle::to_set(x), 5, cfg) == a);
  validate(a);
  double total = 0.0;
  for (double w : a.weights) {
    CHECK(w >= a.weight_floor / 2);
    total += w;
  }
  CHECK(total == doctest::Approx(1.0));
  for (double s : a.stddevs) CHECK(s * s >= a.variance_floor * (1 - 1e-12));
}

TEST_CASE("duplicated points hit the variance floor instead of collapsing") {
  Mat x(20, Vec{1.0, 1.0});
  for (int i = 0; i < 20; ++i) x.push_back({3.0 + 0.1 * i, -2.0});
  const GmmModel g = fit_gmm(oracle::to_set(x), 2, EmConfig{});
  for (double s : g.stddevs) CHECK(s > 0.0);
  CHECK(std::isfinite(log_likelihood(g, oracle::to_set(x))));
}

TEST_CASE("fit_gmm preconditions") {
  const Mat x = {{0.0}, {1.0}};
  CHECK_THROWS_AS(fit_gmm(DescriptorSet(1), 1, EmConfig{}), ConfigError);
  CHECK_THROWS_AS(fit_gmm(oracle::to_set(x), 3, EmConfig{}), ConfigError);
  CHECK_THROWS_AS(fit_gmm(oracle::to_set(x), 0, EmConfig{}), ConfigError);
  EmConfig bad;
  bad.variance_floor = 0.0;
  CHECK_THROWS_AS(fit_gmm(oracle::to_set(x), 1, bad), ConfigError);
  GmmModel g;
  g.num_components = 1;
  g.dim = 1;
  g.weights = {1.0};
  g.means = {0.0};
  g.stddevs = {0.0};
  CHECK_THROWS_AS(validate(g), ConfigError);
  g.stddevs = {1.0};
  CHECK_THROWS_AS(posteriors(g, Vec{1.0, 2.0}), ShapeError);
}

TEST_CASE("k-means examples") {
  const Mat x = {{0, 0}, {0, 1}, {10, 0}, {10, 1}};
  const KMeansResult r = kmeans(oracle::to_set(x), 2, 10, 3);
  CHECK(r.assignment[0] == r.assignment[1]);
  CHECK(r.assignment[2] == r.assignment[3]);
  CHECK(r.assignment[0] != r.assignment[2]);
  CHECK(r.inertia == doctest::Approx(1.0));
  const std::vector<double> centers = {0, 0, 1, 1, 0, 0};
  CHECK(nearest_center(centers, 2, Vec{0.4, 0.4}) == 0);
  CHECK(nearest_center(centers, 2, Vec{0.5, 0.5}) == 0);
  CHECK(nearest_center(centers, 2, Vec{0.6, 0.6}) == 1);
  CHECK_THROWS_AS(kmeans(oracle::to_set(x), 5, 10, 3), ConfigError);
}

TEST_CASE("k-means assignments are nearest centers") {
  oracle::Gen gen(18);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = gen.index(1, 4), k = gen.index(1, 6);
    Mat x;
    for (std::size_t i = 0; i < 50; ++i) x.push_back(gen.vec(d, -3, 3));
    const KMeansResult r = kmeans(oracle::to_set(x), k, 15, trial);
    Mat c;
    for (std::size_t i = 0; i < k; ++i) c.emplace_back(r.center(i).begin(), r.center(i).end());
    double inertia = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const std::size_t want = oracle::nearest(c, x[i]);
      CHECK(r.assignment[i] == want);
      for (std::size_t j = 0; j < d; ++j) inertia += (x[i][j] - c[want][j]) * (x[i][j] - c[want][j]);
    }
    CHECK(r.inertia == doctest::Approx(inertia));
  }
}
