#include "lsdhm/kmeans.hpp"

#include <limits>
#include <string>

#include "lsdhm/error.hpp"
#include "lsdhm/random.hpp"

namespace lsdhm {

namespace {

double squared_distance(std::span<const double> a, const double* b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

}  // namespace

std::size_t nearest_center(std::span<const double> centers, std::size_t dim,
                           std::span<const double> x) {
  if (dim == 0 || centers.size() < dim) throw ConfigError("empty codebook");
  if (x.size() != dim) throw ShapeError("point dimension does not match centers");
  const std::size_t k = centers.size() / dim;
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    const double d = squared_distance(x, centers.data() + c * dim);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

KMeansResult kmeans(const DescriptorSet& data, std::size_t k, std::size_t iterations,
                    std::uint64_t seed) {
  const std::size_t n = data.count();
  const std::size_t dim = data.dim();
  if (k == 0) throw ConfigError("k-means needs k >= 1");
  if (n < k)
    throw ConfigError("k-means needs at least k=" + std::to_string(k) + " points, got " +
                      std::to_string(n));

  Rng rng(seed);
  KMeansResult res;
  res.k = k;
  res.dim = dim;
  res.centers.reserve(k * dim);

  // k-means++ seeding
  auto first = data[rng.index(n)];
  res.centers.insert(res.centers.end(), first.begin(), first.end());
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(data[i], res.centers.data());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double run = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        run += d2[i];
        if (run > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.index(n);
    }
    auto chosen = data[pick];
    res.centers.insert(res.centers.end(), chosen.begin(), chosen.end());
    const double* cp = res.centers.data() + c * dim;
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(data[i], cp));
  }

  res.assignment.assign(n, 0);
  std::vector<double> sums(k * dim);
  std::vector<std::size_t> counts(k);
  for (std::size_t it = 0; it < iterations; ++it) {
    bool changed = it == 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = nearest_center(res.centers, dim, data[i]);
      if (a != res.assignment[i]) changed = true;
      res.assignment[i] = a;
    }
    if (!changed) break;
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = res.assignment[i];
      ++counts[a];
      auto row = data[i];
      for (std::size_t j = 0; j < dim; ++j) sums[a * dim + j] += row[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < dim; ++j)
        res.centers[c * dim + j] = sums[c * dim + j] / static_cast<double>(counts[c]);
    }
  }

  res.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    res.assignment[i] = nearest_center(res.centers, dim, data[i]);
    res.inertia += squared_distance(data[i], res.centers.data() + res.assignment[i] * dim);
  }
  return res;
}

}  // namespace lsdhm
