#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lsdhm/tensor.hpp"

namespace lsdhm {

struct KMeansResult {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<double> centers;  // k x dim
  std::vector<std::size_t> assignment;
  double inertia = 0.0;

  std::span<const double> center(std::size_t i) const { return {centers.data() + i * dim, dim}; }
};

// Index of the nearest center in squared Euclidean distance; ties go to the
// lowest index.
std::size_t nearest_center(std::span<const double> centers, std::size_t dim,
                           std::span<const double> x);

// k-means++ seeding followed by `iterations` Lloyd steps. Empty clusters keep
// their previous center. Throws ConfigError if k == 0 or k > T.
KMeansResult kmeans(const DescriptorSet& data, std::size_t k, std::size_t iterations,
                    std::uint64_t seed);

}  // namespace lsdhm
