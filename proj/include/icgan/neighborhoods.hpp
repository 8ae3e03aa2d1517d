#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "icgan/embedding.hpp"
#include "icgan/rng.hpp"
#include "icgan/tensor.hpp"

namespace icgan {

// A_i for every instance: exactly k members, the instance itself in slot 0.
struct NeighborhoodIndex {
  std::size_t k = 0;
  std::vector<std::vector<std::size_t>> neighbors;

  std::size_t size() const { return neighbors.size(); }
};

enum class SelectionMethod { random, clustered };

inline const char* to_string(SelectionMethod m) {
  return m == SelectionMethod::random ? "random" : "clustered";
}

inline SelectionMethod selection_method_from_string(const std::string& s) {
  if (s == "random") return SelectionMethod::random;
  if (s == "clustered") return SelectionMethod::clustered;
  throw std::invalid_argument("unknown selection method '" + s + "'");
}

struct SelectionResult {
  SelectionMethod method = SelectionMethod::clustered;
  std::vector<std::size_t> indices;  // ascending, no duplicates
};

// Exact cosine k-NN over the store. Rows are unit-norm, so similarity is a
// plain dot product. Ties break toward the lower index; the instance itself
// always occupies slot 0 regardless of duplicates elsewhere.
inline NeighborhoodIndex build_neighborhoods(const InstanceStore& store,
                                             std::size_t k) {
  std::size_t M = store.size();
  if (k < 1)
    throw std::invalid_argument("build_neighborhoods: k must be at least 1");
  if (k > M)
    throw std::invalid_argument("build_neighborhoods: k=" + std::to_string(k) +
                                " exceeds store size " + std::to_string(M));
  const Tensor& H = store.embeddings;
  std::size_t d = store.dim();
  NeighborhoodIndex idx;
  idx.k = k;
  idx.neighbors.resize(M);
  std::vector<std::pair<double, std::size_t>> cand;
  cand.reserve(M);
  for (std::size_t i = 0; i < M; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < M; ++j) {
      if (j == i) continue;
      double s = 0.0;
      for (std::size_t t = 0; t < d; ++t) s += H.at(i, t) * H.at(j, t);
      cand.emplace_back(s, j);
    }
    auto better = [](const std::pair<double, std::size_t>& a,
                     const std::pair<double, std::size_t>& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    };
    std::size_t take = k - 1;
    if (take > 0)
      std::partial_sort(cand.begin(), cand.begin() + take, cand.end(), better);
    auto& A = idx.neighbors[i];
    A.reserve(k);
    A.push_back(i);
    for (std::size_t t = 0; t < take; ++t) A.push_back(cand[t].second);
  }
  return idx;
}

struct KMeansResult {
  Tensor centroids;                     // [n_clusters, d]
  std::vector<std::size_t> assignments; // [N]
  std::vector<double> distortion;       // per Lloyd iteration
  std::size_t iterations = 0;
};

namespace detail {

inline double sq_dist_row(const Tensor& X, std::size_t i, const Tensor& C,
                          std::size_t c) {
  double s = 0.0;
  for (std::size_t j = 0; j < X.cols(); ++j) {
    double dv = X.at(i, j) - C.at(c, j);
    s += dv * dv;
  }
  return s;
}

}  // namespace detail

// Lloyd's algorithm with k-means++ seeding. Stops when assignments repeat
// or after max_iters sweeps.
inline KMeansResult kmeans(const Tensor& points, std::size_t n_clusters,
                           std::uint64_t seed, std::size_t max_iters = 100) {
  if (points.rank() != 2 || points.rows() == 0)
    throw std::invalid_argument("kmeans: need a non-empty [N,d] matrix, got " +
                                points.shape_str());
  std::size_t N = points.rows(), d = points.cols();
  if (n_clusters < 1 || n_clusters > N)
    throw std::invalid_argument("kmeans: n_clusters=" + std::to_string(n_clusters) +
                                " out of range for " + std::to_string(N) +
                                " points");
  std::mt19937_64 rng = make_rng(seed);
  KMeansResult res;
  res.centroids = Tensor::zeros({n_clusters, d});
  Tensor& C = res.centroids;

  // k-means++ seeding
  std::vector<double> d2(N, std::numeric_limits<double>::infinity());
  std::size_t first = uniform_index(rng, N);
  for (std::size_t j = 0; j < d; ++j) C.at(0, j) = points.at(first, j);
  for (std::size_t c = 1; c < n_clusters; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      double dv = detail::sq_dist_row(points, i, C, c - 1);
      if (dv < d2[i]) d2[i] = dv;
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double r = uniform_real(rng) * total;
      double acc = 0.0;
      pick = N - 1;
      for (std::size_t i = 0; i < N; ++i) {
        acc += d2[i];
        if (r < acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = uniform_index(rng, N);
    }
    for (std::size_t j = 0; j < d; ++j) C.at(c, j) = points.at(pick, j);
  }

  res.assignments.assign(N, 0);
  std::vector<std::size_t> prev(N, n_clusters);  // invalid marker
  std::vector<std::size_t> counts(n_clusters, 0);
  for (std::size_t it = 0; it < max_iters; ++it) {
    double distortion = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t bc = 0;
      for (std::size_t c = 0; c < n_clusters; ++c) {
        double dv = detail::sq_dist_row(points, i, C, c);
        if (dv < best) {
          best = dv;
          bc = c;
        }
      }
      res.assignments[i] = bc;
      distortion += best;
    }
    res.distortion.push_back(distortion);
    res.iterations = it + 1;
    if (res.assignments == prev) break;
    prev = res.assignments;

    std::fill(C.data.begin(), C.data.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < N; ++i) {
      std::size_t c = res.assignments[i];
      counts[c] += 1;
      for (std::size_t j = 0; j < d; ++j) C.at(c, j) += points.at(i, j);
    }
    for (std::size_t c = 0; c < n_clusters; ++c) {
      if (counts[c] == 0) {
        // re-seed an empty cluster on the point farthest from its centroid
        double worst = -1.0;
        std::size_t pick = 0;
        for (std::size_t i = 0; i < N; ++i) {
          double dv = detail::sq_dist_row(points, i, C, res.assignments[i]);
          if (dv > worst) {
            worst = dv;
            pick = i;
          }
        }
        for (std::size_t j = 0; j < d; ++j) C.at(c, j) = points.at(pick, j);
      } else {
        for (std::size_t j = 0; j < d; ++j)
          C.at(c, j) /= static_cast<double>(counts[c]);
      }
    }
  }
  return res;
}

// Pick n conditioning instances from the rows of `points`. Clustered mode
// runs k-means and takes the data point nearest each centroid; a point
// claimed twice falls through to the next closest unused one.
inline SelectionResult select_instances(const Tensor& points, std::size_t n,
                                        SelectionMethod method, std::uint64_t seed) {
  if (points.rank() != 2)
    throw std::invalid_argument("select_instances: need [N,d] matrix, got " +
                                points.shape_str());
  std::size_t N = points.rows();
  if (n < 1 || n > N)
    throw std::invalid_argument("select_instances: n=" + std::to_string(n) +
                                " out of range for " + std::to_string(N) +
                                " points");
  SelectionResult sel;
  sel.method = method;
  if (method == SelectionMethod::random) {
    std::vector<std::size_t> perm(N);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng = make_rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t j = i + uniform_index(rng, N - i);
      std::swap(perm[i], perm[j]);
    }
    sel.indices.assign(perm.begin(), perm.begin() + n);
  } else {
    KMeansResult km = kmeans(points, n, seed);
    std::vector<bool> used(N, false);
    for (std::size_t c = 0; c < n; ++c) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < N; ++i) {
        if (used[i]) continue;
        best = std::min(best, detail::sq_dist_row(points, i, km.centroids, c));
      }
      // lowest index within a relative whisker of the minimum, so that
      // geometric ties stay ties despite roundoff in the centroid mean
      std::size_t pick = N;
      for (std::size_t i = 0; i < N; ++i) {
        if (used[i]) continue;
        double dv = detail::sq_dist_row(points, i, km.centroids, c);
        if (dv <= best + 1e-9 * best) {
          pick = i;
          break;
        }
      }
      used[pick] = true;
      sel.indices.push_back(pick);
    }
  }
  std::sort(sel.indices.begin(), sel.indices.end());
  return sel;
}

inline SelectionResult select_instances(const InstanceStore& store, std::size_t n,
                                        SelectionMethod method, std::uint64_t seed) {
  return select_instances(store.embeddings, n, method, seed);
}

// Uniform draw of a conditioning index from a pool of the given size.
inline std::size_t sample_conditioning(std::size_t pool_size, std::mt19937_64& rng) {
  if (pool_size == 0)
    throw std::invalid_argument("sample_conditioning: empty pool");
  return uniform_index(rng, pool_size);
}

// Uniform draw from A_i, the instance itself included.
inline std::size_t sample_neighbor(const NeighborhoodIndex& idx, std::size_t i,
                                   std::mt19937_64& rng) {
  if (i >= idx.size())
    throw std::out_of_range("sample_neighbor: instance " + std::to_string(i) +
                            " out of range for " + std::to_string(idx.size()));
  const auto& A = idx.neighbors[i];
  return A[uniform_index(rng, A.size())];
}

}  // namespace icgan
