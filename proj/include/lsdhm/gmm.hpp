#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lsdhm/tensor.hpp"

namespace lsdhm {

// Diagonal-covariance Gaussian mixture. `variance_floor` is the absolute floor
// that was applied while fitting (stddevs are never below its square root).
struct GmmModel {
  std::size_t num_components = 0;
  std::size_t dim = 0;
  std::vector<double> weights;  // K
  std::vector<double> means;    // K x M
  std::vector<double> stddevs;  // K x M
  double weight_floor = 0.0;
  double variance_floor = 0.0;
  std::uint64_t seed = 0;

  std::span<const double> mean(std::size_t k) const { return {means.data() + k * dim, dim}; }
  std::span<const double> stddev(std::size_t k) const {
    return {stddevs.data() + k * dim, dim};
  }

  friend bool operator==(const GmmModel&, const GmmModel&) = default;
};

struct EmConfig {
  std::size_t max_iters = 100;
  double tol = 1e-6;  // relative improvement of the mean log-likelihood
  std::uint64_t seed = 0;
  double weight_floor = 1e-6;
  // Multiplied by the mean per-dimension data variance to give the absolute floor.
  double variance_floor = 1e-4;
  std::size_t kmeans_iters = 10;
  unsigned threads = 1;
};

// Mean log-likelihood of the model at the start of every EM iteration, plus
// the final model.
struct EmTrace {
  std::vector<double> log_likelihood;
  std::size_t iterations = 0;
  bool converged = false;
};

// Throws ConfigError on an empty set, T < K, K == 0 or a non-positive floor/tol.
GmmModel fit_gmm(const DescriptorSet& descriptors, std::size_t num_components,
                 const EmConfig& cfg, EmTrace* trace = nullptr);

// Soft assignment of `d` to every component, evaluated in log space.
std::vector<double> posteriors(const GmmModel& model, std::span<const double> d);

// Writes the posteriors of `d` into `out` (length K); returns the log of the
// mixture density at `d`.
double posteriors_into(const GmmModel& model, std::span<const double> d, std::span<double> out);

// Posteriors for every descriptor, T x K row-major.
std::vector<double> posteriors_batch(const GmmModel& model, const DescriptorSet& descriptors);

// Mean over descriptors of log sum_k w_k N(d; mu_k, sigma_k^2).
double log_likelihood(const GmmModel& model, const DescriptorSet& descriptors);

// Throws ConfigError if the model breaks its own invariants.
void validate(const GmmModel& model);

}  // namespace lsdhm
