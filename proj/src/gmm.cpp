#include "lsdhm/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "lsdhm/error.hpp"
#include "lsdhm/kmeans.hpp"
#include "lsdhm/parallel.hpp"

namespace lsdhm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)
constexpr std::size_t kChunk = 2048;

// Per-component terms that do not depend on the descriptor.
struct Precomputed {
  std::vector<double> log_norm;     // log w_k - 0.5 * sum(log 2pi + log sigma^2)
  std::vector<double> inv_var;      // K x M
};

Precomputed precompute(const GmmModel& m) {
  Precomputed p;
  p.log_norm.resize(m.num_components);
  p.inv_var.resize(m.num_components * m.dim);
  for (std::size_t k = 0; k < m.num_components; ++k) {
    double s = std::log(m.weights[k]);
    for (std::size_t j = 0; j < m.dim; ++j) {
      const double sd = m.stddevs[k * m.dim + j];
      s -= 0.5 * (kLog2Pi + 2.0 * std::log(sd));
      p.inv_var[k * m.dim + j] = 1.0 / (sd * sd);
    }
    p.log_norm[k] = s;
  }
  return p;
}

double log_posteriors(const GmmModel& m, const Precomputed& p, std::span<const double> d,
                      std::span<double> out) {
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < m.num_components; ++k) {
    const double* mu = m.means.data() + k * m.dim;
    const double* iv = p.inv_var.data() + k * m.dim;
    double q = 0.0;
    for (std::size_t j = 0; j < m.dim; ++j) {
      const double diff = d[j] - mu[j];
      q += diff * diff * iv[j];
    }
    out[k] = p.log_norm[k] - 0.5 * q;
    peak = std::max(peak, out[k]);
  }
  double total = 0.0;
  for (std::size_t k = 0; k < m.num_components; ++k) {
    out[k] = std::exp(out[k] - peak);
    total += out[k];
  }
  for (std::size_t k = 0; k < m.num_components; ++k) out[k] /= total;
  return peak + std::log(total);
}

struct Stats {
  std::vector<double> s0, s1, s2;
  double ll = 0.0;

  Stats(std::size_t k, std::size_t dim) : s0(k, 0.0), s1(k * dim, 0.0), s2(k * dim, 0.0) {}

  void add(const Stats& o) {
    for (std::size_t i = 0; i < s0.size(); ++i) s0[i] += o.s0[i];
    for (std::size_t i = 0; i < s1.size(); ++i) s1[i] += o.s1[i];
    for (std::size_t i = 0; i < s2.size(); ++i) s2[i] += o.s2[i];
    ll += o.ll;
  }
};

// One E-step. Chunk boundaries are fixed, so the reduction order does not
// depend on the number of threads.
Stats expectation(const GmmModel& m, const DescriptorSet& data, unsigned threads) {
  const Precomputed p = precompute(m);
  const std::size_t n = data.count();
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<Stats> partial(chunks, Stats(m.num_components, m.dim));
  parallel_for(chunks, threads, [&](std::size_t c) {
    Stats& st = partial[c];
    std::vector<double> gamma(m.num_components);
    const std::size_t end = std::min(n, (c + 1) * kChunk);
    for (std::size_t t = c * kChunk; t < end; ++t) {
      auto x = data[t];
      st.ll += log_posteriors(m, p, x, gamma);
      for (std::size_t k = 0; k < m.num_components; ++k) {
        const double g = gamma[k];
        st.s0[k] += g;
        double* s1 = st.s1.data() + k * m.dim;
        double* s2 = st.s2.data() + k * m.dim;
        for (std::size_t j = 0; j < m.dim; ++j) {
          s1[j] += g * x[j];
          s2[j] += g * x[j] * x[j];
        }
      }
    }
  });
  Stats total(m.num_components, m.dim);
  for (const auto& st : partial) total.add(st);
  return total;
}

void maximization(GmmModel& m, const Stats& st, std::size_t n) {
  for (std::size_t k = 0; k < m.num_components; ++k) {
    const double s0 = st.s0[k];
    m.weights[k] = s0 / static_cast<double>(n);
    // A component that lost all its mass keeps its mean and spread.
    if (s0 <= std::numeric_limits<double>::min() * 1e10) continue;
    for (std::size_t j = 0; j < m.dim; ++j) {
      const double mu = st.s1[k * m.dim + j] / s0;
      const double var = std::max(st.s2[k * m.dim + j] / s0 - mu * mu, m.variance_floor);
      m.means[k * m.dim + j] = mu;
      m.stddevs[k * m.dim + j] = std::sqrt(var);
    }
  }
  double total = 0.0;
  for (double& w : m.weights) {
    w = std::max(w, m.weight_floor);
    total += w;
  }
  for (double& w : m.weights) w /= total;
}

}  // namespace

void validate(const GmmModel& model) {
  const std::size_t k = model.num_components, dim = model.dim;
  if (k == 0 || dim == 0) throw ConfigError("GMM with zero components or dimension");
  if (model.weights.size() != k || model.means.size() != k * dim ||
      model.stddevs.size() != k * dim)
    throw ConfigError("GMM parameter arrays have inconsistent sizes");
  for (double w : model.weights)
    if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("GMM weights must be positive");
  for (double s : model.stddevs)
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("GMM stddevs must be positive");
}

GmmModel fit_gmm(const DescriptorSet& data, std::size_t num_components, const EmConfig& cfg,
                 EmTrace* trace) {
  const std::size_t n = data.count();
  const std::size_t dim = data.dim();
  if (n == 0) throw ConfigError("cannot fit a GMM to an empty descriptor set");
  if (num_components == 0) throw ConfigError("GMM needs at least one component");
  if (n < num_components)
    throw ConfigError("GMM with K=" + std::to_string(num_components) + " needs at least " +
                      std::to_string(num_components) + " descriptors, got " + std::to_string(n));
  if (!(cfg.tol > 0.0) || !(cfg.weight_floor > 0.0) || !(cfg.variance_floor > 0.0))
    throw ConfigError("EM tolerance and floors must be positive");
  if (cfg.max_iters == 0) throw ConfigError("EM needs max_iters >= 1");

  // Global statistics: used for the variance floor and for the fallback spread.
  std::vector<double> mean(dim, 0.0), var(dim, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    auto x = data[t];
    for (std::size_t j = 0; j < dim; ++j) mean[j] += x[j];
  }
  for (double& v : mean) v /= static_cast<double>(n);
  for (std::size_t t = 0; t < n; ++t) {
    auto x = data[t];
    for (std::size_t j = 0; j < dim; ++j) var[j] += (x[j] - mean[j]) * (x[j] - mean[j]);
  }
  double mean_var = 0.0;
  for (double& v : var) {
    v /= static_cast<double>(n);
    mean_var += v;
  }
  mean_var /= static_cast<double>(dim);

  GmmModel m;
  m.num_components = num_components;
  m.dim = dim;
  m.seed = cfg.seed;
  m.weight_floor = cfg.weight_floor;
  m.variance_floor = cfg.variance_floor * (mean_var > 0.0 ? mean_var : 1.0);

  // Hard k-means partition gives the starting parameters.
  const KMeansResult km = kmeans(data, num_components, cfg.kmeans_iters, cfg.seed);
  Stats init(num_components, dim);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t k = km.assignment[t];
    auto x = data[t];
    init.s0[k] += 1.0;
    for (std::size_t j = 0; j < dim; ++j) {
      init.s1[k * dim + j] += x[j];
      init.s2[k * dim + j] += x[j] * x[j];
    }
  }
  m.weights.assign(num_components, 0.0);
  m.means = km.centers;
  m.stddevs.assign(num_components * dim, 0.0);
  for (std::size_t k = 0; k < num_components; ++k)
    for (std::size_t j = 0; j < dim; ++j)
      m.stddevs[k * dim + j] = std::sqrt(std::max(var[j], m.variance_floor));
  maximization(m, init, n);

  EmTrace local;
  EmTrace& tr = trace ? *trace : local;
  tr = EmTrace{};
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    const Stats st = expectation(m, data, cfg.threads);
    const double ll = st.ll / static_cast<double>(n);
    if (!std::isfinite(ll)) throw NumericError("EM produced a non-finite log-likelihood");
    if (!tr.log_likelihood.empty()) {
      const double prev = tr.log_likelihood.back();
      if (ll - prev < cfg.tol * std::abs(prev)) {
        tr.log_likelihood.push_back(ll);
        tr.converged = true;
        break;
      }
    }
    tr.log_likelihood.push_back(ll);
    maximization(m, st, n);
    tr.iterations = it + 1;
  }
  if (!tr.converged) tr.log_likelihood.push_back(log_likelihood(m, data));
  return m;
}

double posteriors_into(const GmmModel& model, std::span<const double> d, std::span<double> out) {
  if (d.size() != model.dim)
    throw ShapeError("descriptor has dimension " + std::to_string(d.size()) + ", GMM expects " +
                     std::to_string(model.dim));
  if (out.size() != model.num_components) throw ShapeError("posterior buffer has wrong size");
  return log_posteriors(model, precompute(model), d, out);
}

std::vector<double> posteriors(const GmmModel& model, std::span<const double> d) {
  std::vector<double> out(model.num_components);
  posteriors_into(model, d, out);
  return out;
}

std::vector<double> posteriors_batch(const GmmModel& model, const DescriptorSet& descriptors) {
  if (!descriptors.empty() && descriptors.dim() != model.dim)
    throw ShapeError("descriptor has dimension " + std::to_string(descriptors.dim()) +
                     ", GMM expects " + std::to_string(model.dim));
  const Precomputed p = precompute(model);
  const std::size_t k = model.num_components;
  std::vector<double> out(descriptors.count() * k);
  for (std::size_t t = 0; t < descriptors.count(); ++t)
    log_posteriors(model, p, descriptors[t], std::span<double>(out.data() + t * k, k));
  return out;
}

double log_likelihood(const GmmModel& model, const DescriptorSet& descriptors) {
  if (descriptors.empty()) throw ConfigError("log-likelihood of an empty descriptor set");
  if (descriptors.dim() != model.dim) throw ShapeError("descriptor dimension does not match GMM");
  const Precomputed p = precompute(model);
  std::vector<double> gamma(model.num_components);
  double total = 0.0;
  for (std::size_t t = 0; t < descriptors.count(); ++t)
    total += log_posteriors(model, p, descriptors[t], gamma);
  return total / static_cast<double>(descriptors.count());
}

}  // namespace lsdhm
