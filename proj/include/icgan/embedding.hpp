#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "icgan/rng.hpp"
#include "icgan/tensor.hpp"

namespace icgan {

enum class EmbedderKind { identity, random_projection, pca };

inline const char* to_string(EmbedderKind k) {
  switch (k) {
    case EmbedderKind::identity: return "identity";
    case EmbedderKind::random_projection: return "random_projection";
    case EmbedderKind::pca: return "pca";
  }
  return "?";
}

inline EmbedderKind embedder_kind_from_string(const std::string& s) {
  if (s == "identity") return EmbedderKind::identity;
  if (s == "random_projection") return EmbedderKind::random_projection;
  if (s == "pca") return EmbedderKind::pca;
  throw std::invalid_argument("unknown embedder kind '" + s + "'");
}

struct EmbedderSpec {
  EmbedderKind kind = EmbedderKind::identity;
  std::size_t output_dim = 2;
  std::uint64_t seed = 0;  // random_projection only
};

// Frozen feature map. Fitted once, then applied unchanged everywhere
// (conditioning, neighborhoods, evaluation).
struct Embedder {
  EmbedderSpec spec;
  std::size_t input_dim = 0;
  Tensor projection;  // [input_dim, output_dim]; empty for identity
  Tensor mean;        // [input_dim]; pca only
};

// Store of l2-normalized instance embeddings, optionally labeled.
struct InstanceStore {
  Tensor embeddings;  // [M, d_e], unit rows
  std::optional<std::vector<int>> labels;

  std::size_t size() const { return embeddings.rows(); }
  std::size_t dim() const { return embeddings.cols(); }

  Tensor row(std::size_t i) const {
    Tensor r = Tensor::zeros({dim()});
    for (std::size_t j = 0; j < dim(); ++j) r.data[j] = embeddings.at(i, j);
    return r;
  }
};

inline Embedder fit_embedder(const Tensor& data, const EmbedderSpec& spec) {
  if (data.rank() != 2 || data.rows() == 0)
    throw std::invalid_argument("fit_embedder: need a non-empty [N,d] dataset, got " +
                                data.shape_str());
  std::size_t d_in = data.cols();
  Embedder e;
  e.spec = spec;
  e.input_dim = d_in;
  switch (spec.kind) {
    case EmbedderKind::identity:
      if (spec.output_dim != d_in)
        throw std::invalid_argument(
            "fit_embedder: identity needs output_dim == input dim (" +
            std::to_string(spec.output_dim) + " vs " + std::to_string(d_in) + ")");
      break;
    case EmbedderKind::random_projection: {
      if (spec.output_dim == 0)
        throw std::invalid_argument("fit_embedder: output_dim must be positive");
      std::mt19937_64 rng = make_rng(spec.seed);
      e.projection = normal_tensor(
          rng, {d_in, spec.output_dim},
          1.0 / std::sqrt(static_cast<double>(spec.output_dim)));
      break;
    }
    case EmbedderKind::pca: {
      if (spec.output_dim == 0 || spec.output_dim > d_in)
        throw std::invalid_argument("fit_embedder: pca output_dim " +
                                    std::to_string(spec.output_dim) +
                                    " out of range for input dim " +
                                    std::to_string(d_in));
      ConstMatMap X = as_matrix(data);
      Eigen::VectorXd mu = X.colwise().mean();
      EigenRowMat C = EigenRowMat::Zero(d_in, d_in);
      {
        EigenRowMat Xc = X.rowwise() - mu.transpose();
        double denom = data.rows() > 1 ? static_cast<double>(data.rows() - 1) : 1.0;
        C = (Xc.transpose() * Xc) / denom;
      }
      Eigen::SelfAdjointEigenSolver<EigenRowMat> es(C);
      if (es.info() != Eigen::Success)
        throw std::runtime_error("fit_embedder: pca eigendecomposition failed");
      // eigenvalues come back ascending
      Eigen::VectorXd ev = es.eigenvalues();
      double tol = std::max(1e-12, 1e-9 * std::max(0.0, ev(d_in - 1)));
      std::size_t rank = 0;
      for (std::size_t i = 0; i < d_in; ++i)
        if (ev(i) > tol) ++rank;
      if (rank < spec.output_dim)
        throw std::invalid_argument("fit_embedder: pca needs rank >= " +
                                    std::to_string(spec.output_dim) +
                                    " but data has rank " + std::to_string(rank));
      e.mean = Tensor::zeros({d_in});
      for (std::size_t i = 0; i < d_in; ++i) e.mean.data[i] = mu(i);
      e.projection = Tensor::zeros({d_in, spec.output_dim});
      for (std::size_t c = 0; c < spec.output_dim; ++c) {
        Eigen::VectorXd comp = es.eigenvectors().col(d_in - 1 - c);
        // fix sign so the largest-magnitude entry is positive; keeps the fit
        // deterministic across runs
        Eigen::Index imax;
        comp.cwiseAbs().maxCoeff(&imax);
        if (comp(imax) < 0.0) comp = -comp;
        for (std::size_t r = 0; r < d_in; ++r) e.projection.at(r, c) = comp(r);
      }
      break;
    }
  }
  return e;
}

// Map one point to its l2-normalized embedding.
inline Tensor embed(const Embedder& e, const Tensor& x) {
  if (x.rank() != 1 || x.shape[0] != e.input_dim)
    throw std::invalid_argument("embed: expected [" + std::to_string(e.input_dim) +
                                "] input, got " + x.shape_str());
  std::size_t d_out = e.spec.output_dim;
  Tensor h = Tensor::zeros({d_out});
  switch (e.spec.kind) {
    case EmbedderKind::identity:
      h.data = x.data;
      break;
    case EmbedderKind::random_projection:
      for (std::size_t j = 0; j < d_out; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < e.input_dim; ++i)
          s += x.data[i] * e.projection.at(i, j);
        h.data[j] = s;
      }
      break;
    case EmbedderKind::pca:
      for (std::size_t j = 0; j < d_out; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < e.input_dim; ++i)
          s += (x.data[i] - e.mean.data[i]) * e.projection.at(i, j);
        h.data[j] = s;
      }
      break;
  }
  double norm = 0.0;
  for (double v : h.data) norm += v * v;
  norm = std::sqrt(norm);
  if (!(norm > 1e-12))
    throw std::invalid_argument("embed: zero-norm embedding, cannot normalize");
  for (double& v : h.data) v /= norm;
  return h;
}

// Embed every row; failures are collected and reported together with their
// row indices rather than stopping at the first one.
inline InstanceStore embed_all(const Embedder& e, const Tensor& data,
                               std::optional<std::vector<int>> labels = {}) {
  if (data.rank() != 2 || data.rows() == 0)
    throw std::invalid_argument("embed_all: need a non-empty [N,d] dataset, got " +
                                data.shape_str());
  if (labels && labels->size() != data.rows())
    throw std::invalid_argument("embed_all: " + std::to_string(labels->size()) +
                                " labels for " + std::to_string(data.rows()) +
                                " rows");
  std::size_t M = data.rows();
  InstanceStore store;
  store.embeddings = Tensor::zeros({M, e.spec.output_dim});
  std::string failures;
  std::size_t n_failed = 0;
  for (std::size_t i = 0; i < M; ++i) {
    Tensor x = Tensor::zeros({data.cols()});
    for (std::size_t j = 0; j < data.cols(); ++j) x.data[j] = data.at(i, j);
    try {
      Tensor h = embed(e, x);
      for (std::size_t j = 0; j < h.numel(); ++j) store.embeddings.at(i, j) = h.data[j];
    } catch (const std::exception& ex) {
      ++n_failed;
      if (n_failed <= 8)
        failures += "\n  row " + std::to_string(i) + ": " + ex.what();
    }
  }
  if (n_failed > 0)
    throw std::invalid_argument("embed_all: " + std::to_string(n_failed) +
                                " row(s) failed" + failures +
                                (n_failed > 8 ? "\n  ..." : ""));
  store.labels = std::move(labels);
  return store;
}

}  // namespace icgan
