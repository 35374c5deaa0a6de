#include "lsdhm/svm.hpp"

#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "lsdhm/error.hpp"
#include "lsdhm/fisher.hpp"
#include "lsdhm/parallel.hpp"
#include "lsdhm/random.hpp"

namespace lsdhm {

LsDhmVector fuse(std::span<const double> fcv, std::span<const double> fc) {
  if (fcv.empty() || fc.empty()) throw ShapeError("both feature blocks must be non-empty");
  LsDhmVector out;
  out.fcv_length = fcv.size();
  out.fc_length = fc.size();
  out.values.assign(fcv.begin(), fcv.end());
  out.values.insert(out.values.end(), fc.begin(), fc.end());
  out.fcv_zero = !l2_normalize_inplace(std::span<double>(out.values.data(), fcv.size()));
  out.fc_zero = !l2_normalize_inplace(std::span<double>(out.values.data() + fcv.size(), fc.size()));
  return out;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

double svm_class_objective(const SvmModel& model, std::size_t k,
                           std::span<const std::vector<double>> features,
                           std::span<const int> labels) {
  const double lambda = 1.0 / (model.c * static_cast<double>(features.size()));
  const auto w = model.weight(k);
  double loss = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const double y = labels[i] == static_cast<int>(k) ? 1.0 : -1.0;
    loss += std::max(0.0, 1.0 - y * (dot(w, features[i]) + model.biases[k]));
  }
  return 0.5 * lambda * dot(w, w) + loss / static_cast<double>(features.size());
}

SvmModel train_svm(std::span<const std::vector<double>> features, std::span<const int> labels,
                   const SvmConfig& cfg, int num_classes) {
  if (features.size() != labels.size()) throw ShapeError("features and labels differ in length");
  if (features.empty()) throw ConfigError("no training samples");
  if (!(cfg.c > 0.0)) throw ConfigError("SVM C must be positive");
  const std::size_t dim = features.front().size();
  for (const auto& f : features)
    if (f.size() != dim) throw ShapeError("all SVM features must share one dimension");
  const std::set<int> present(labels.begin(), labels.end());
  if (*present.begin() < 0) throw ConfigError("negative class label");
  if (present.size() < 2) throw ConfigError("SVM training needs at least two classes");
  const int classes = std::max(num_classes, *present.rbegin() + 1);

  SvmModel model;
  model.num_classes = static_cast<std::size_t>(classes);
  model.dim = dim;
  model.c = cfg.c;
  model.weights.assign(model.num_classes * dim, 0.0);
  model.biases.assign(model.num_classes, 0.0);

  const std::size_t n = features.size();
  const double lambda = 1.0 / (cfg.c * static_cast<double>(n));

  // The same visiting order is used for every class so class problems are
  // independent and can run on separate threads.
  std::vector<std::vector<std::size_t>> orders(cfg.epochs);
  Rng rng(cfg.seed);
  for (auto& o : orders) {
    o.resize(n);
    std::iota(o.begin(), o.end(), std::size_t{0});
    rng.shuffle(o.begin(), o.end());
  }

  parallel_for(model.num_classes, cfg.threads, [&](std::size_t k) {
    std::span<double> w(model.weights.data() + k * dim, dim);
    double& b = model.biases[k];
    // w is stored as scale * v so the decay step is O(1).
    std::vector<double> v(dim, 0.0);
    double scale = 1.0;
    double t = 0.0;
    for (const auto& order : orders) {
      for (std::size_t i : order) {
        const double eta = std::min(cfg.eta0 / (1.0 + cfg.eta0 * lambda * t), 0.5 / lambda);
        const double y = labels[i] == static_cast<int>(k) ? 1.0 : -1.0;
        const double margin = y * (scale * dot(v, features[i]) + b);
        scale *= 1.0 - eta * lambda;
        if (margin < 1.0) {
          const double step = eta * y / scale;
          const auto& x = features[i];
          for (std::size_t j = 0; j < dim; ++j) v[j] += step * x[j];
          b += eta * y;
        }
        if (scale < 1e-9) {
          for (double& vj : v) vj *= scale;
          scale = 1.0;
        }
        t += 1.0;
      }
    }
    for (std::size_t j = 0; j < dim; ++j) w[j] = scale * v[j];
  });
  for (double x : model.weights)
    if (!std::isfinite(x)) throw NumericError("SVM training diverged");
  return model;
}

Prediction predict(const SvmModel& model, std::span<const double> feature) {
  if (feature.size() != model.dim)
    throw ShapeError("feature has dimension " + std::to_string(feature.size()) +
                     ", SVM expects " + std::to_string(model.dim));
  Prediction p;
  p.scores.resize(model.num_classes);
  for (std::size_t k = 0; k < model.num_classes; ++k) {
    p.scores[k] = dot(model.weight(k), feature) + model.biases[k];
    if (p.scores[k] > p.scores[static_cast<std::size_t>(p.label)]) p.label = static_cast<int>(k);
  }
  return p;
}

double accuracy(const SvmModel& model, std::span<const std::vector<double>> features,
                std::span<const int> labels) {
  if (features.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < features.size(); ++i)
    if (predict(model, features[i]).label == labels[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(features.size());
}

}  // namespace lsdhm
