#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace lsdhm {

// Block-normalized concatenation of an FCV and FC features, FCV first.
struct LsDhmVector {
  std::vector<double> values;
  std::size_t fcv_length = 0;
  std::size_t fc_length = 0;
  bool fcv_zero = false;  // a zero block is left zero and flagged
  bool fc_zero = false;

  std::span<const double> fcv_block() const { return {values.data(), fcv_length}; }
  std::span<const double> fc_block() const { return {values.data() + fcv_length, fc_length}; }
};

// Throws ShapeError if either block is empty.
LsDhmVector fuse(std::span<const double> fcv, std::span<const double> fc);

// One-vs-rest linear classifiers, one weight row and bias per class.
struct SvmModel {
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  double c = 1.0;
  std::vector<double> weights;  // num_classes x dim
  std::vector<double> biases;

  std::span<const double> weight(std::size_t k) const { return {weights.data() + k * dim, dim}; }

  friend bool operator==(const SvmModel&, const SvmModel&) = default;
};

struct SvmConfig {
  double c = 1.0;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  // Step size eta0 / (1 + eta0 * lambda * t), lambda = 1 / (C N).
  double eta0 = 0.5;
  unsigned threads = 1;
};

// Regularized one-vs-rest hinge objective of a single class, as minimized by
// train_svm: lambda/2 |w|^2 + mean_i max(0, 1 - y_i (w.x_i + b)).
double svm_class_objective(const SvmModel& model, std::size_t k,
                           std::span<const std::vector<double>> features,
                           std::span<const int> labels);

// Throws ConfigError with fewer than two classes present or C <= 0, and
// ShapeError when feature dimensions disagree.
SvmModel train_svm(std::span<const std::vector<double>> features, std::span<const int> labels,
                   const SvmConfig& cfg, int num_classes = 0);

struct Prediction {
  int label = 0;
  std::vector<double> scores;
};

// Argmax of w_k.x + b_k; ties go to the lowest class index.
Prediction predict(const SvmModel& model, std::span<const double> feature);

double accuracy(const SvmModel& model, std::span<const std::vector<double>> features,
                std::span<const int> labels);

}  // namespace lsdhm
