#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>

#include "icgan/rng.hpp"
#include "icgan/tensor.hpp"

namespace icgan {

// Gaussian kernel density sampler over a fixed support set. Serves as a
// known-good reference sampler for exercising the evaluation pipeline: with
// sigma 0 it replays support points exactly, and its sample covariance is the
// support covariance plus sigma^2 I.
struct KdeOracle {
  Tensor support;  // [N, d]
  double sigma = 0.0;
};

// Bandwidth by Scott's rule: N^(-1/(d+4)) times the mean marginal standard
// deviation of the support.
inline double scott_bandwidth(const Tensor& support) {
  std::size_t N = support.rows(), d = support.cols();
  if (N < 2)
    throw std::invalid_argument("scott_bandwidth: need at least 2 support points");
  double mean_std = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < N; ++i) mu += support.at(i, j);
    mu /= static_cast<double>(N);
    double var = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      double dv = support.at(i, j) - mu;
      var += dv * dv;
    }
    mean_std += std::sqrt(var / static_cast<double>(N - 1));
  }
  mean_std /= static_cast<double>(d);
  return std::pow(static_cast<double>(N), -1.0 / (static_cast<double>(d) + 4.0)) *
         mean_std;
}

inline KdeOracle fit_kde(const Tensor& support, std::optional<double> sigma = {}) {
  if (support.rank() != 2 || support.rows() == 0)
    throw std::invalid_argument("fit_kde: need a non-empty [N,d] support, got " +
                                support.shape_str());
  KdeOracle k;
  k.support = support;
  if (sigma) {
    if (*sigma < 0.0)
      throw std::invalid_argument("fit_kde: sigma must be non-negative");
    k.sigma = *sigma;
  } else {
    k.sigma = scott_bandwidth(support);
  }
  return k;
}

inline Tensor kde_sample(const KdeOracle& k, std::size_t n, std::mt19937_64& rng) {
  std::size_t N = k.support.rows(), d = k.support.cols();
  Tensor out = Tensor::zeros({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t s = uniform_index(rng, N);
    for (std::size_t j = 0; j < d; ++j)
      out.at(i, j) = k.support.at(s, j) + (k.sigma > 0.0 ? k.sigma * normal(rng) : 0.0);
  }
  return out;
}

}  // namespace icgan
