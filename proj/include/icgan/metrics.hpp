#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "icgan/tensor.hpp"

namespace icgan {

struct MomentSummary {
  Tensor mean;  // [d]
  Tensor cov;   // [d,d], unbiased
  std::size_t n = 0;
};

inline MomentSummary features_to_moments(const Tensor& feats) {
  if (feats.rank() != 2 || feats.rows() < 2)
    throw std::invalid_argument("features_to_moments: need at least 2 rows, got " +
                                feats.shape_str());
  std::size_t N = feats.rows(), d = feats.cols();
  ConstMatMap X = as_matrix(feats);
  Eigen::VectorXd mu = X.colwise().mean();
  EigenRowMat Xc = X.rowwise() - mu.transpose();
  EigenRowMat C = (Xc.transpose() * Xc) / static_cast<double>(N - 1);
  MomentSummary m;
  m.n = N;
  m.mean = Tensor::zeros({d});
  for (std::size_t i = 0; i < d; ++i) m.mean.data[i] = mu(i);
  m.cov = matrix_to_tensor(C);
  return m;
}

// Square root of a symmetric PSD matrix via eigendecomposition. Mild negative
// eigenvalues from roundoff are clamped to zero; anything below -1e-8 is a
// genuine non-PSD input and rejected.
inline Tensor matrix_sqrt_psd(const Tensor& A) {
  if (A.rank() != 2 || A.rows() != A.cols())
    throw std::invalid_argument("matrix_sqrt_psd: need square matrix, got " +
                                A.shape_str());
  std::size_t d = A.rows();
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j)
      if (std::abs(A.at(i, j) - A.at(j, i)) > 1e-9)
        throw std::invalid_argument("matrix_sqrt_psd: not symmetric at (" +
                                    std::to_string(i) + "," + std::to_string(j) +
                                    "), gap " +
                                    std::to_string(std::abs(A.at(i, j) - A.at(j, i))));
  Eigen::SelfAdjointEigenSolver<EigenRowMat> es(as_matrix(A));
  if (es.info() != Eigen::Success)
    throw std::runtime_error("matrix_sqrt_psd: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -1e-8)
      throw std::invalid_argument("matrix_sqrt_psd: eigenvalue " +
                                  std::to_string(ev(i)) + " is negative");
    if (ev(i) < 0.0) ev(i) = 0.0;
  }
  EigenRowMat S = es.eigenvectors() * ev.cwiseSqrt().asDiagonal() *
                  es.eigenvectors().transpose();
  return matrix_to_tensor(S);
}

// Squared Frechet distance between two Gaussians. The cross term is computed
// as tr((S a S)^(1/2)) with S = cov_a^(1/2), which keeps the inner matrix
// symmetric.
inline double frechet_distance(const MomentSummary& a, const MomentSummary& b) {
  if (!a.mean.same_shape(b.mean))
    throw std::invalid_argument("frechet_distance: dimension mismatch, " +
                                a.mean.shape_str() + " vs " + b.mean.shape_str());
  std::size_t d = a.mean.numel();
  double mean_term = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double dv = a.mean.data[i] - b.mean.data[i];
    mean_term += dv * dv;
  }
  Tensor sa = matrix_sqrt_psd(a.cov);
  EigenRowMat inner = as_matrix(sa) * as_matrix(b.cov) * as_matrix(sa);
  // symmetrize roundoff before the second root
  EigenRowMat innerT = inner.transpose();
  inner = 0.5 * (inner + innerT);
  Tensor cross = matrix_sqrt_psd(matrix_to_tensor(inner));
  double tr = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    tr += a.cov.at(i, i) + b.cov.at(i, i) - 2.0 * cross.at(i, i);
  return mean_term + tr;
}

inline double frechet_distance(const Tensor& feats_a, const Tensor& feats_b) {
  return frechet_distance(features_to_moments(feats_a), features_to_moments(feats_b));
}

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

namespace detail {

inline double sq_dist(const Tensor& A, std::size_t i, const Tensor& B,
                      std::size_t j) {
  double s = 0.0;
  for (std::size_t t = 0; t < A.cols(); ++t) {
    double dv = A.at(i, t) - B.at(j, t);
    s += dv * dv;
  }
  return s;
}

// squared distance to the k-th nearest other row, for every row
inline std::vector<double> knn_radii_sq(const Tensor& X, std::size_t k) {
  std::size_t N = X.rows();
  std::vector<double> radii(N);
  std::vector<double> d2(N);
  for (std::size_t i = 0; i < N; ++i) {
    std::size_t m = 0;
    for (std::size_t j = 0; j < N; ++j)
      if (j != i) d2[m++] = sq_dist(X, i, X, j);
    std::nth_element(d2.begin(), d2.begin() + (k - 1), d2.begin() + m);
    radii[i] = d2[k - 1];
  }
  return radii;
}

}  // namespace detail

// Manifold precision/recall: a generated point counts as precise when it lies
// inside some real point's k-NN ball (boundary included), and vice versa for
// recall.
inline PrecisionRecall precision_recall(const Tensor& real, const Tensor& gen,
                                        std::size_t k_pr) {
  if (real.rank() != 2 || gen.rank() != 2 || real.cols() != gen.cols())
    throw std::invalid_argument("precision_recall: need matching [N,d] inputs, got " +
                                real.shape_str() + " vs " + gen.shape_str());
  if (k_pr < 1)
    throw std::invalid_argument("precision_recall: k must be at least 1");
  if (real.rows() <= k_pr || gen.rows() <= k_pr)
    throw std::invalid_argument("precision_recall: need more than k=" +
                                std::to_string(k_pr) + " rows on both sides (" +
                                std::to_string(real.rows()) + " real, " +
                                std::to_string(gen.rows()) + " generated)");
  std::vector<double> rr = detail::knn_radii_sq(real, k_pr);
  std::vector<double> rg = detail::knn_radii_sq(gen, k_pr);
  std::size_t hit = 0;
  for (std::size_t j = 0; j < gen.rows(); ++j) {
    for (std::size_t i = 0; i < real.rows(); ++i) {
      if (detail::sq_dist(gen, j, real, i) <= rr[i]) {
        ++hit;
        break;
      }
    }
  }
  PrecisionRecall pr;
  pr.precision = static_cast<double>(hit) / static_cast<double>(gen.rows());
  hit = 0;
  for (std::size_t i = 0; i < real.rows(); ++i) {
    for (std::size_t j = 0; j < gen.rows(); ++j) {
      if (detail::sq_dist(real, i, gen, j) <= rg[j]) {
        ++hit;
        break;
      }
    }
  }
  pr.recall = static_cast<double>(hit) / static_cast<double>(real.rows());
  return pr;
}

// Classes are bucketed by how often they appeared in training: at least 100
// samples is "many", 20 to 99 is "med", below 20 is "few". Buckets with no
// classes stay out of the report.
inline std::string frequency_group(std::size_t train_count) {
  if (train_count >= 100) return "many";
  if (train_count >= 20) return "med";
  return "few";
}

struct StratifiedFid {
  std::map<std::string, double> fid;
  std::map<std::string, std::size_t> n_real;
  std::map<std::string, std::size_t> n_gen;
};

inline StratifiedFid stratified_fid(const Tensor& real_feats,
                                    const std::vector<int>& real_labels,
                                    const Tensor& gen_feats,
                                    const std::vector<int>& gen_labels,
                                    const std::vector<std::size_t>& train_counts) {
  if (real_labels.size() != real_feats.rows() || gen_labels.size() != gen_feats.rows())
    throw std::invalid_argument("stratified_fid: label counts do not match features");
  auto group_of = [&](int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= train_counts.size())
      throw std::invalid_argument("stratified_fid: label " + std::to_string(label) +
                                  " outside the " +
                                  std::to_string(train_counts.size()) +
                                  " training classes");
    return frequency_group(train_counts[static_cast<std::size_t>(label)]);
  };
  std::map<std::string, std::vector<std::size_t>> real_rows, gen_rows;
  for (std::size_t i = 0; i < real_labels.size(); ++i)
    real_rows[group_of(real_labels[i])].push_back(i);
  for (std::size_t i = 0; i < gen_labels.size(); ++i)
    gen_rows[group_of(gen_labels[i])].push_back(i);

  auto gather = [](const Tensor& X, const std::vector<std::size_t>& rows) {
    Tensor out = Tensor::zeros({rows.size(), X.cols()});
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < X.cols(); ++j) out.at(i, j) = X.at(rows[i], j);
    return out;
  };

  StratifiedFid out;
  for (const auto& [group, rrows] : real_rows) {
    auto it = gen_rows.find(group);
    if (it == gen_rows.end())
      throw std::invalid_argument("stratified_fid: group '" + group +
                                  "' has real samples but no generated ones");
    out.fid[group] = frechet_distance(gather(real_feats, rrows),
                                      gather(gen_feats, it->second));
    out.n_real[group] = rrows.size();
    out.n_gen[group] = it->second.size();
  }
  for (const auto& [group, grows] : gen_rows)
    if (!real_rows.count(group))
      throw std::invalid_argument("stratified_fid: group '" + group +
                                  "' has generated samples but no real ones");
  return out;
}

// Mean over groups of the mean pairwise distance inside each group. Groups
// are the samples that shared one conditioning.
inline double diversity(const Tensor& feats,
                        const std::vector<std::size_t>& group_ids) {
  if (group_ids.size() != feats.rows())
    throw std::invalid_argument("diversity: group ids do not match features");
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < group_ids.size(); ++i)
    groups[group_ids[i]].push_back(i);
  double total = 0.0;
  std::size_t n_groups = 0;
  for (const auto& [gid, rows] : groups) {
    if (rows.size() < 2)
      throw std::invalid_argument("diversity: group " + std::to_string(gid) +
                                  " has fewer than 2 samples");
    double s = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < rows.size(); ++a)
      for (std::size_t b = a + 1; b < rows.size(); ++b) {
        s += std::sqrt(detail::sq_dist(feats, rows[a], feats, rows[b]));
        ++pairs;
      }
    total += s / static_cast<double>(pairs);
    ++n_groups;
  }
  if (n_groups == 0)
    throw std::invalid_argument("diversity: no groups");
  return total / static_cast<double>(n_groups);
}

}  // namespace icgan
