#include "lsdhm/fisher.hpp"

#include <cmath>
#include <string>

#include "lsdhm/error.hpp"
#include "lsdhm/kmeans.hpp"

namespace lsdhm {

FvAccumulators accumulate(const DescriptorSet& descriptors, const GmmModel& model,
                          double posterior_threshold) {
  if (!descriptors.empty() && descriptors.dim() != model.dim)
    throw ShapeError("descriptors have dimension " + std::to_string(descriptors.dim()) +
                     ", GMM expects " + std::to_string(model.dim));
  const std::size_t K = model.num_components, M = model.dim;
  FvAccumulators acc;
  acc.num_components = K;
  acc.dim = M;
  acc.s0.assign(K, 0.0);
  acc.s_mean.assign(K * M, 0.0);
  acc.s_sigma.assign(K * M, 0.0);

  const std::vector<double> gamma = posteriors_batch(model, descriptors);
  for (std::size_t t = 0; t < descriptors.count(); ++t) {
    auto x = descriptors[t];
    for (std::size_t k = 0; k < K; ++k) {
      const double g = gamma[t * K + k];
      if (g < posterior_threshold) continue;
      acc.s0[k] += g;
      double* sm = acc.s_mean.data() + k * M;
      double* ss = acc.s_sigma.data() + k * M;
      for (std::size_t j = 0; j < M; ++j) {
        sm[j] += g * x[j];
        ss[j] += g * x[j] * x[j];
      }
    }
  }
  return acc;
}

FcvVector fv_gradients(const FvAccumulators& acc, const GmmModel& model) {
  if (acc.num_components != model.num_components || acc.dim != model.dim)
    throw ShapeError("accumulators do not match the GMM");
  const std::size_t K = model.num_components, M = model.dim;
  FcvVector out;
  out.num_components = K;
  out.dim = M;
  out.values.assign(2 * K * M, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const double w = model.weights[k];
    const double mean_scale = 1.0 / std::sqrt(w);
    const double sigma_scale = 1.0 / std::sqrt(2.0 * w);
    const double s0 = acc.s0[k];
    for (std::size_t j = 0; j < M; ++j) {
      const std::size_t i = k * M + j;
      const double mu = model.means[i];
      const double sd = model.stddevs[i];
      const double sm = acc.s_mean[i];
      const double ss = acc.s_sigma[i];
      out.values[i] = (sm - mu * s0) * mean_scale / sd;
      out.values[K * M + i] =
          (ss - 2.0 * mu * sm + (mu * mu - sd * sd) * s0) * sigma_scale / (sd * sd);
    }
  }
  return out;
}

bool l2_normalize_inplace(std::span<double> v) {
  const double norm = l2_norm(v);
  if (norm == 0.0) return false;
  for (double& x : v) x /= norm;
  return true;
}

FcvVector power_l2_normalize(FcvVector v, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("power exponent must lie in (0, 1]");
  for (double& x : v.values) {
    if (!std::isfinite(x)) throw NumericError("non-finite Fisher vector component");
    if (alpha != 1.0) x = std::copysign(std::pow(std::abs(x), alpha), x);
  }
  v.degenerate = !l2_normalize_inplace(v.values);
  return v;
}

DescriptorSet prepare_descriptors(const Tensor3& maps, const PcaModel& pca) {
  if (maps.channels() != pca.input_dim)
    throw ShapeError("maps have " + std::to_string(maps.channels()) +
                     " channels, PCA expects " + std::to_string(pca.input_dim));
  const std::size_t T = maps.height() * maps.width();
  std::vector<double> projected(T * pca.output_dim);
  std::vector<double> fiber(maps.channels());
  for (std::size_t t = 0; t < T; ++t) {
    auto src = maps.data().subspan(t * maps.channels(), maps.channels());
    std::copy(src.begin(), src.end(), fiber.begin());
    max_abs_normalize_inplace(fiber);
    pca_project_into(pca, fiber,
                     std::span<double>(projected.data() + t * pca.output_dim, pca.output_dim));
  }
  return DescriptorSet(pca.output_dim, std::move(projected));
}

FcvVector encode_fcv(const Tensor3& maps, const PcaModel& pca, const GmmModel& gmm,
                     const FisherOptions& opts) {
  if (pca.output_dim != gmm.dim) throw ShapeError("PCA output does not match GMM dimension");
  const DescriptorSet desc = prepare_descriptors(maps, pca);
  return power_l2_normalize(fv_gradients(accumulate(desc, gmm, opts.posterior_threshold), gmm),
                            opts.power);
}

std::vector<double> encode_direct(const Tensor3& maps) {
  if (maps.empty()) throw ShapeError("cannot encode empty maps");
  std::vector<double> out(maps.values());
  for (std::size_t t = 0; t < maps.height() * maps.width(); ++t)
    max_abs_normalize_inplace(std::span<double>(out.data() + t * maps.channels(), maps.channels()));
  l2_normalize_inplace(out);
  return out;
}

BowCodebook train_bow_codebook(const DescriptorSet& projected, std::size_t size,
                               std::uint64_t seed, std::size_t iterations) {
  const KMeansResult km = kmeans(projected, size, iterations, seed);
  return BowCodebook{projected.dim(), km.centers};
}

std::vector<double> bow_histogram(const DescriptorSet& projected, const BowCodebook& codebook) {
  if (codebook.size() == 0) throw ConfigError("BoW codebook is empty");
  if (projected.dim() != codebook.dim) throw ShapeError("descriptor dimension does not match codebook");
  std::vector<double> hist(codebook.size(), 0.0);
  for (std::size_t t = 0; t < projected.count(); ++t)
    hist[nearest_center(codebook.centers, codebook.dim, projected[t])] += 1.0;
  const double total = static_cast<double>(projected.count());
  if (total > 0.0)
    for (double& h : hist) h /= total;
  return hist;
}

std::vector<double> encode_bow(const Tensor3& maps, const PcaModel& pca,
                               const BowCodebook& codebook) {
  if (codebook.size() == 0) throw ConfigError("BoW codebook is empty");
  std::vector<double> hist = bow_histogram(prepare_descriptors(maps, pca), codebook);
  l2_normalize_inplace(hist);
  return hist;
}

}  // namespace lsdhm
