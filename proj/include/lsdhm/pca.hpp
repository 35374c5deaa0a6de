#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lsdhm/tensor.hpp"

namespace lsdhm {

// Linear projection onto the top principal directions of a descriptor sample.
// No whitening is applied; `whitened` is stored so model files say so.
struct PcaModel {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::vector<double> mean;                // input_dim
  std::vector<double> basis;               // output_dim x input_dim, row per direction
  std::vector<double> explained_variance;  // output_dim, non-increasing
  bool whitened = false;

  std::span<const double> direction(std::size_t i) const {
    return {basis.data() + i * input_dim, input_dim};
  }

  friend bool operator==(const PcaModel&, const PcaModel&) = default;
};

// Fits mean and top-`output_dim` eigenvectors of the 1/T covariance. The sign
// of every direction is fixed so its first component with |x| > 1e-12 is positive.
// Throws ConfigError if output_dim > D, T < output_dim, or output_dim == 0.
PcaModel fit_pca(const DescriptorSet& descriptors, std::size_t output_dim);

// basis * (d - mean). Throws ShapeError on a dimension mismatch.
std::vector<double> pca_project(const PcaModel& model, std::span<const double> d);
void pca_project_into(const PcaModel& model, std::span<const double> d, std::span<double> out);

DescriptorSet pca_project_all(const PcaModel& model, const DescriptorSet& descriptors);

// basis^T * y + mean
std::vector<double> pca_reconstruct(const PcaModel& model, std::span<const double> y);

// Default reduced dimension for a layer with `channels` channels.
inline std::size_t default_pca_dim(std::size_t channels) {
  constexpr std::size_t kDefaultDim = 80;
  return channels < kDefaultDim ? channels : kDefaultDim;
}

}  // namespace lsdhm
