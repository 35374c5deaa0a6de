#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lsdhm/error.hpp"
#include "lsdhm/pca.hpp"
#include "oracles.hpp"

using namespace lsdhm;
using oracle::Mat;
using oracle::Vec;

namespace {

Mat correlated_sample(oracle::Gen& gen, std::size_t t, std::size_t d) {
  // random linear mix of independent sources with distinct scales
  Mat mix(d, Vec(d));
  for (auto& row : mix) row = gen.vec(d);
  Mat out;
  for (std::size_t i = 0; i < t; ++i) {
    Vec s(d);
    for (std::size_t j = 0; j < d; ++j) s[j] = gen.normal(0.0, 1.0 + 2.0 * static_cast<double>(j));
    Vec x = oracle::matvec(mix, s);
    x[0] += 3.0;
    out.push_back(x);
  }
  return out;
}

}  // namespace

TEST_CASE("points on y = 2x have a single direction") {
  Mat pts;
  for (int i = -5; i <= 5; ++i) pts.push_back({0.3 * i, 0.6 * i});
  const PcaModel m = fit_pca(oracle::to_set(pts), 1);
  const PcaModel full = fit_pca(oracle::to_set(pts), 2);
  CHECK(m.explained_variance[0] == doctest::Approx(full.explained_variance[0] + full.explained_variance[1]));
  CHECK(std::abs(full.explained_variance[1]) < 1e-12);
  CHECK(m.basis[1] / m.basis[0] == doctest::Approx(2.0));
}

TEST_CASE("complete basis reconstructs the data") {
  oracle::Gen gen(5);
  const Mat x = correlated_sample(gen, 100, 6);
  const PcaModel m = fit_pca(oracle::to_set(x), 6);
  for (const auto& d : x) {
    const auto back = pca_reconstruct(m, pca_project(m, d));
    for (std::size_t j = 0; j < d.size(); ++j) CHECK(std::abs(back[j] - d[j]) < 1e-8);
  }
}

TEST_CASE("fit_pca matches a Jacobi eigensolver") {
  oracle::Gen gen(6);
  const Mat x = correlated_sample(gen, 500, 8);
  const PcaModel m = fit_pca(oracle::to_set(x), 3);
  const auto eig = oracle::jacobi_eigen(oracle::covariance(x));
  const Vec mean = oracle::mean_of(x);
  for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(m.mean[j] - mean[j]) < 1e-12);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(m.explained_variance[i] - eig.values[i]) < 1e-8);
    // same direction up to sign
    double dot = 0.0;
    for (std::size_t j = 0; j < 8; ++j) dot += m.basis[i * 8 + j] * eig.vectors[i][j];
    const double sign = dot < 0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < 8; ++j)
      CHECK(std::abs(m.basis[i * 8 + j] - sign * eig.vectors[i][j]) < 1e-8);
  }
}

TEST_CASE("pca_project examples") {
  oracle::Gen gen(7);
  const Mat x = correlated_sample(gen, 60, 5);
  const PcaModel m = fit_pca(oracle::to_set(x), 3);
  for (double v : pca_project(m, m.mean)) CHECK(v == 0.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec d = gen.vec(5, -4, 4);
    const Vec got = pca_project(m, d), want = oracle::project(m, d);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(got[i] - want[i]) < 1e-10);
  }
  PcaModel id;
  id.input_dim = id.output_dim = 3;
  id.mean = {0, 0, 0};
  id.basis = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  id.explained_variance = {1, 1, 1};
  CHECK(pca_project(id, Vec{1.5, -2, 3}) == Vec{1.5, -2, 3});
  CHECK_THROWS_AS(pca_project(m, Vec{1, 2}), ShapeError);
}

TEST_CASE("pca model invariants") {
  oracle::Gen gen(8);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = gen.index(2, 10), k = gen.index(1, d);
    const Mat x = correlated_sample(gen, 40 + gen.index(0, 100), d);
    const PcaModel m = fit_pca(oracle::to_set(x), k);
    for (std::size_t i = 0; i < k; ++i) {
      if (i + 1 < k) CHECK(m.explained_variance[i] >= m.explained_variance[i + 1]);
      CHECK(m.explained_variance[i] >= 0.0);
      bool sign_fixed = false;
      for (std::size_t j = 0; j < d && !sign_fixed; ++j)
        if (std::abs(m.basis[i * d + j]) > 1e-12) {
          CHECK(m.basis[i * d + j] > 0.0);
          sign_fixed = true;
        }
      for (std::size_t l = 0; l < k; ++l) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += m.basis[i * d + j] * m.basis[l * d + j];
        CHECK(std::abs(dot - (i == l ? 1.0 : 0.0)) < 1e-8);
      }
    }
    // projected data: zero mean, total variance = sum of kept eigenvalues
    const auto proj = oracle::to_mat(pca_project_all(m, oracle::to_set(x)));
    const Vec pm = oracle::mean_of(proj);
    for (double v : pm) CHECK(std::abs(v) < 1e-8);
    double total = 0.0, kept = 0.0;
    for (const auto& r : proj)
      for (double v : r) total += v * v;
    total /= static_cast<double>(proj.size());
    for (double v : m.explained_variance) kept += v;
    CHECK(std::abs(total - kept) <= 1e-6 * kept);
    // descriptor order does not matter
    Mat shuffled = x;
    std::shuffle(shuffled.begin(), shuffled.end(), gen.eng);
    const PcaModel ms = fit_pca(oracle::to_set(shuffled), k);
    for (std::size_t i = 0; i < m.basis.size(); ++i) CHECK(std::abs(ms.basis[i] - m.basis[i]) < 1e-10);
    for (std::size_t i = 0; i < k; ++i)
      CHECK(std::abs(ms.explained_variance[i] - m.explained_variance[i]) < 1e-10);
  }
}

TEST_CASE("fit_pca preconditions") {
  const Mat x = {{1, 2}, {3, 4}, {5, 7}};
  CHECK_THROWS_AS(fit_pca(oracle::to_set(x), 3), ConfigError);
  CHECK_THROWS_AS(fit_pca(oracle::to_set({{1, 2, 3}, {2, 3, 5}}), 3), ConfigError);
  CHECK_THROWS_AS(fit_pca(oracle::to_set(x), 0), ConfigError);
  CHECK(default_pca_dim(384) == 80);
  CHECK(default_pca_dim(32) == 32);
}
