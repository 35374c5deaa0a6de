#include "lsdhm/pca.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "lsdhm/error.hpp"

namespace lsdhm {

PcaModel fit_pca(const DescriptorSet& descriptors, std::size_t output_dim) {
  const std::size_t dim = descriptors.dim();
  const std::size_t count = descriptors.count();
  if (output_dim == 0) throw ConfigError("PCA output dimension must be positive");
  if (output_dim > dim)
    throw ConfigError("PCA output dimension " + std::to_string(output_dim) +
                      " exceeds input dimension " + std::to_string(dim));
  if (count < output_dim)
    throw ConfigError("PCA needs at least " + std::to_string(output_dim) +
                      " descriptors, got " + std::to_string(count));

  PcaModel model;
  model.input_dim = dim;
  model.output_dim = output_dim;
  model.mean.assign(dim, 0.0);
  for (std::size_t t = 0; t < count; ++t) {
    auto row = descriptors[t];
    for (std::size_t i = 0; i < dim; ++i) model.mean[i] += row[i];
  }
  for (double& m : model.mean) m /= static_cast<double>(count);

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim),
                                              static_cast<Eigen::Index>(dim));
  std::vector<double> centered(dim);
  for (std::size_t t = 0; t < count; ++t) {
    auto row = descriptors[t];
    for (std::size_t i = 0; i < dim; ++i) centered[i] = row[i] - model.mean[i];
    for (std::size_t i = 0; i < dim; ++i) {
      const double ci = centered[i];
      for (std::size_t j = i; j < dim; ++j)
        cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += ci * centered[j];
    }
  }
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = i; j < dim; ++j) {
      const auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(j);
      cov(a, b) /= static_cast<double>(count);
      cov(b, a) = cov(a, b);
    }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericError("PCA eigendecomposition failed");
  // Eigenvalues come back ascending.
  const auto& values = solver.eigenvalues();
  const auto& vectors = solver.eigenvectors();
  model.basis.resize(output_dim * dim);
  model.explained_variance.resize(output_dim);
  for (std::size_t r = 0; r < output_dim; ++r) {
    const auto col = static_cast<Eigen::Index>(dim - 1 - r);
    model.explained_variance[r] = std::max(0.0, values(col));
    double sign = 1.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double v = vectors(static_cast<Eigen::Index>(i), col);
      if (std::abs(v) > 1e-12) {
        sign = v < 0.0 ? -1.0 : 1.0;
        break;
      }
    }
    for (std::size_t i = 0; i < dim; ++i)
      model.basis[r * dim + i] = sign * vectors(static_cast<Eigen::Index>(i), col);
  }
  return model;
}

void pca_project_into(const PcaModel& model, std::span<const double> d, std::span<double> out) {
  if (d.size() != model.input_dim)
    throw ShapeError("PCA input has dimension " + std::to_string(d.size()) + ", model expects " +
                     std::to_string(model.input_dim));
  if (out.size() != model.output_dim) throw ShapeError("PCA output buffer has wrong size");
  for (std::size_t r = 0; r < model.output_dim; ++r) {
    const double* row = model.basis.data() + r * model.input_dim;
    double acc = 0.0;
    for (std::size_t i = 0; i < model.input_dim; ++i) acc += row[i] * (d[i] - model.mean[i]);
    out[r] = acc;
  }
}

std::vector<double> pca_project(const PcaModel& model, std::span<const double> d) {
  std::vector<double> out(model.output_dim);
  pca_project_into(model, d, out);
  return out;
}

DescriptorSet pca_project_all(const PcaModel& model, const DescriptorSet& descriptors) {
  std::vector<double> values(descriptors.count() * model.output_dim);
  for (std::size_t t = 0; t < descriptors.count(); ++t)
    pca_project_into(model, descriptors[t],
                     std::span<double>(values.data() + t * model.output_dim, model.output_dim));
  DescriptorSet out(model.output_dim, std::move(values));
  if (descriptors.has_positions()) out.set_positions(descriptors.positions());
  return out;
}

std::vector<double> pca_reconstruct(const PcaModel& model, std::span<const double> y) {
  if (y.size() != model.output_dim) throw ShapeError("PCA code has wrong dimension");
  std::vector<double> out = model.mean;
  for (std::size_t r = 0; r < model.output_dim; ++r)
    for (std::size_t i = 0; i < model.input_dim; ++i)
      out[i] += model.basis[r * model.input_dim + i] * y[r];
  return out;
}

}  // namespace lsdhm
