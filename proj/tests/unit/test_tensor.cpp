#include <doctest.h>

#include <cmath>

#include "lsdhm/error.hpp"
#include "lsdhm/tensor.hpp"
#include "oracles.hpp"

using namespace lsdhm;

TEST_CASE("tensor construction checks sizes") {
  CHECK_THROWS_AS(Tensor3(0, 2, 2), ShapeError);
  CHECK_THROWS_AS(Tensor3(2, 2, 2, std::vector<double>(7)), ShapeError);
  Tensor3 t(2, 3, 4, 1.5);
  CHECK(t.size() == 24);
  CHECK(t(1, 2, 3) == 1.5);
}

TEST_CASE("channels_to_descriptors") {
  SUBCASE("14x14x384 maps give 196 descriptors of dim 384") {
    const auto d = channels_to_descriptors(Tensor3(14, 14, 384));
    CHECK(d.count() == 196);
    CHECK(d.dim() == 384);
  }
  SUBCASE("1x1xD maps give the fiber") {
    const Tensor3 t(1, 1, 3, {0.5, -2.0, 7.0});
    const auto d = channels_to_descriptors(t);
    REQUIRE(d.count() == 1);
    CHECK(std::vector<double>(d[0].begin(), d[0].end()) == t.values());
  }
  SUBCASE("2x2x3 row-major layout") {
    std::vector<double> v(12);
    for (int i = 0; i < 12; ++i) v[i] = i;
    const auto d = channels_to_descriptors(Tensor3(2, 2, 3, v));
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t j = 0; j < 3; ++j) CHECK(d[t][j] == static_cast<double>(3 * t + j));
    CHECK(d.positions()[3] == std::pair<std::size_t, std::size_t>{1, 1});
  }
}

TEST_CASE("descriptor round trip is bit exact") {
  oracle::Gen gen(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor3 t = gen.tensor(gen.index(1, 7), gen.index(1, 7), gen.index(1, 9), -1e3, 1e3);
    const auto d = channels_to_descriptors(t);
    CHECK(descriptors_to_channels(d, t.height(), t.width()) == t);
  }
}

TEST_CASE("max_abs_normalize examples") {
  auto n = [](std::vector<double> v) { return max_abs_normalize(v); };
  CHECK(n({2, -4, 1}) == std::vector<double>{0.5, -1.0, 0.25});
  CHECK(n({0, 0, 0}) == std::vector<double>{0, 0, 0});
  CHECK(n({-3}) == std::vector<double>{-1});
}

TEST_CASE("max_abs_normalize properties") {
  oracle::Gen gen(12);
  for (int trial = 0; trial < 200; ++trial) {
    auto v = gen.vec(gen.index(1, 20), -50, 50);
    const auto once = max_abs_normalize(v);
    double peak = 0.0;
    for (double x : once) {
      CHECK(std::abs(x) <= 1.0);
      peak = std::max(peak, std::abs(x));
    }
    CHECK(peak == 1.0);
    CHECK(max_abs_normalize(once) == once);
    const double c = gen.uniform(1e-3, 1e3);
    auto scaled = v;
    for (auto& x : scaled) x *= c;
    const auto s = max_abs_normalize(scaled);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(s[i] - once[i]) < 1e-12);
  }
}

TEST_CASE("occlude") {
  Tensor3 img(4, 4, 1, 3.0);
  SUBCASE("full image") {
    const auto o = occlude(img, {0, 0, 4, 4}, 0.0);
    for (double v : o.data()) CHECK(v == 0.0);
  }
  SUBCASE("empty rectangle") { CHECK(occlude(img, {2, 1, 2, 3}, 0.0) == img); }
  SUBCASE("top-left 2x2") {
    const auto o = occlude(img, {0, 0, 2, 2}, 0.0);
    for (std::size_t h = 0; h < 4; ++h)
      for (std::size_t w = 0; w < 4; ++w) CHECK(o(h, w, 0) == (h < 2 && w < 2 ? 0.0 : 3.0));
  }
  SUBCASE("out of bounds") {
    CHECK_THROWS_AS(occlude(img, {0, 0, 5, 2}, 0.0), ConfigError);
    CHECK_THROWS_AS(occlude(img, {3, 0, 2, 2}, 0.0), ConfigError);
  }
}

TEST_CASE("labeled dataset enforces labels and shapes") {
  LabeledDataset ds(3);
  ds.add(Tensor3(2, 2, 3), 0);
  CHECK_THROWS_AS(ds.add(Tensor3(2, 2, 3), 3), DataError);
  CHECK_THROWS_AS(ds.add(Tensor3(2, 2, 3), -1), DataError);
  CHECK_THROWS_AS(ds.add(Tensor3(3, 2, 3), 1), ShapeError);
  CHECK(ds.size() == 1);
}
