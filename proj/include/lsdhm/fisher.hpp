#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lsdhm/gmm.hpp"
#include "lsdhm/pca.hpp"
#include "lsdhm/tensor.hpp"

namespace lsdhm {

// Zeroth, first and second order soft-count statistics of a descriptor set
// under a GMM.
struct FvAccumulators {
  std::size_t num_components = 0;
  std::size_t dim = 0;
  std::vector<double> s0;       // K
  std::vector<double> s_mean;   // K x M, sum_t gamma_t^k x_t
  std::vector<double> s_sigma;  // K x M, sum_t gamma_t^k x_t^2
};

// Fisher Convolutional Vector. Layout: all K mean-gradient blocks, then all K
// sigma-gradient blocks, each block of length M.
struct FcvVector {
  std::size_t num_components = 0;
  std::size_t dim = 0;
  std::vector<double> values;
  // Set when normalization met an all-zero vector and left it zero.
  bool degenerate = false;

  std::span<const double> mean_block(std::size_t k) const {
    return {values.data() + k * dim, dim};
  }
  std::span<const double> sigma_block(std::size_t k) const {
    return {values.data() + (num_components + k) * dim, dim};
  }
};

struct FisherOptions {
  double power = 0.5;               // exponent of the signed power normalization
  double posterior_threshold = 1e-12;  // soft assignments below this are skipped
};

FvAccumulators accumulate(const DescriptorSet& descriptors, const GmmModel& model,
                          double posterior_threshold = 1e-12);

// Unnormalized gradients with respect to the means and standard deviations.
FcvVector fv_gradients(const FvAccumulators& acc, const GmmModel& model);

// sign(x)|x|^alpha on every component followed by l2 normalization. An
// all-zero vector is returned unchanged with `degenerate` set.
FcvVector power_l2_normalize(FcvVector v, double alpha);

// Scales to unit l2 norm; returns false (and leaves v untouched) when v is zero.
bool l2_normalize_inplace(std::span<double> v);

// max-abs normalization of every fiber, then PCA projection.
DescriptorSet prepare_descriptors(const Tensor3& maps, const PcaModel& pca);

// Full pipeline from maps to a normalized FCV of length 2*M*K.
FcvVector encode_fcv(const Tensor3& maps, const PcaModel& pca, const GmmModel& gmm,
                     const FisherOptions& opts = {});

// Normalized fibers concatenated in spatial order, then l2 normalized.
std::vector<double> encode_direct(const Tensor3& maps);

struct BowCodebook {
  std::size_t dim = 0;
  std::vector<double> centers;  // K_bow x dim

  std::size_t size() const { return dim == 0 ? 0 : centers.size() / dim; }

  friend bool operator==(const BowCodebook&, const BowCodebook&) = default;
};

BowCodebook train_bow_codebook(const DescriptorSet& projected, std::size_t size,
                               std::uint64_t seed, std::size_t iterations = 20);

// Hard-assignment histogram before normalization (counts / T).
std::vector<double> bow_histogram(const DescriptorSet& projected, const BowCodebook& codebook);

// l1 then l2 normalized hard-assignment histogram.
std::vector<double> encode_bow(const Tensor3& maps, const PcaModel& pca,
                               const BowCodebook& codebook);

}  // namespace lsdhm
