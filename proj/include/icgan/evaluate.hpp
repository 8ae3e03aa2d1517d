#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "icgan/embedding.hpp"
#include "icgan/metrics.hpp"
#include "icgan/models.hpp"
#include "icgan/neighborhoods.hpp"
#include "icgan/rng.hpp"
#include "icgan/tensor.hpp"

namespace icgan {

// Anything that maps (z, h, labels) batches to data-space samples. Trained
// generators, probes, and reference samplers all fit behind this.
using GeneratorFn =
    std::function<Tensor(const Tensor& z, const Tensor& h,
                         const std::vector<std::size_t>* y)>;

inline GeneratorFn as_generator_fn(const GeneratorParams& p) {
  return [&p](const Tensor& z, const Tensor& h, const std::vector<std::size_t>* y) {
    return generate(p, z, h, y);
  };
}

struct EvalOptions {
  std::size_t samples_per_instance = 8;
  std::size_t k_pr = 3;
  std::size_t z_dim = 16;
  std::uint64_t seed = 1;
  bool class_conditional = false;
  bool constant_conditioning = false;
  // per-class training sample counts; non-empty enables the stratified report
  std::vector<std::size_t> train_class_counts;
};

struct EvalReport {
  double fid = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::optional<double> diversity;
  std::map<std::string, double> stratified;
  std::map<std::string, std::size_t> stratified_n_real, stratified_n_gen;
  std::size_t n_generated = 0;
  std::size_t n_reference = 0;
};

namespace detail {

inline Tensor repeat_row(const Tensor& row, std::size_t n) {
  Tensor out = Tensor::zeros({n, row.numel()});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < row.numel(); ++j) out.at(i, j) = row.data[j];
  return out;
}

inline Tensor unit_e1(std::size_t d) {
  Tensor t = Tensor::zeros({d});
  t.data[0] = 1.0;
  return t;
}

}  // namespace detail

// Generate from every selected conditioning, embed both sides with the frozen
// embedder, and score. Unlabeled mode draws samples_per_instance per selected
// instance; labeled mode instead matches the per-class counts of the
// reference, drawing each sample's conditioning uniformly from the selected
// instances of that class. Each conditioning unit gets its own derived RNG
// substream, so reports are independent of evaluation order.
inline EvalReport evaluate(const GeneratorFn& gen, const InstanceStore& store,
                           const SelectionResult& sel, const Tensor& reference_raw,
                           const std::optional<std::vector<int>>& reference_labels,
                           const Embedder& embedder, const EvalOptions& opt) {
  if (sel.indices.empty())
    throw std::invalid_argument("evaluate: empty selection");
  for (std::size_t s : sel.indices)
    if (s >= store.size())
      throw std::invalid_argument("evaluate: selected index " + std::to_string(s) +
                                  " outside store of " + std::to_string(store.size()));
  InstanceStore ref_store = embed_all(embedder, reference_raw, reference_labels);
  const Tensor& ref_feats = ref_store.embeddings;

  std::vector<Tensor> gen_batches;
  std::vector<std::size_t> group_ids;  // conditioning group per generated row
  std::vector<int> gen_labels;

  if (!opt.class_conditional) {
    if (opt.samples_per_instance < 1)
      throw std::invalid_argument("evaluate: samples_per_instance must be positive");
    for (std::size_t gi = 0; gi < sel.indices.size(); ++gi) {
      std::size_t s = sel.indices[gi];
      std::mt19937_64 rng = make_rng(derive_seed(opt.seed, s));
      Tensor z = normal_tensor(rng, {opt.samples_per_instance, opt.z_dim});
      Tensor h = detail::repeat_row(
          opt.constant_conditioning ? detail::unit_e1(store.dim()) : store.row(s),
          opt.samples_per_instance);
      gen_batches.push_back(gen(z, h, nullptr));
      for (std::size_t t = 0; t < opt.samples_per_instance; ++t)
        group_ids.push_back(gi);
    }
  } else {
    if (!store.labels)
      throw std::invalid_argument("evaluate: class-conditional run needs a labeled store");
    if (!reference_labels)
      throw std::invalid_argument("evaluate: class-conditional run needs reference labels");
    // per-class conditioning candidates, preferring the selection
    std::map<int, std::vector<std::size_t>> candidates;
    for (std::size_t s : sel.indices) candidates[(*store.labels)[s]].push_back(s);
    std::map<int, std::vector<std::size_t>> fallback;
    for (std::size_t i = 0; i < store.size(); ++i)
      fallback[(*store.labels)[i]].push_back(i);
    std::map<int, std::size_t> ref_counts;
    for (int l : *reference_labels) ref_counts[l] += 1;
    for (const auto& [label, n_c] : ref_counts) {
      auto cit = candidates.find(label);
      const std::vector<std::size_t>* cand =
          cit != candidates.end() ? &cit->second : nullptr;
      if (!cand) {
        auto fit = fallback.find(label);
        if (fit == fallback.end())
          throw std::invalid_argument("evaluate: reference class " +
                                      std::to_string(label) +
                                      " absent from the instance store");
        cand = &fit->second;
      }
      std::mt19937_64 rng = make_rng(
          derive_seed(opt.seed, (1ull << 32) + static_cast<std::uint64_t>(label)));
      Tensor z = normal_tensor(rng, {n_c, opt.z_dim});
      Tensor h = Tensor::zeros({n_c, store.dim()});
      std::vector<std::size_t> y(n_c, static_cast<std::size_t>(label));
      for (std::size_t t = 0; t < n_c; ++t) {
        std::size_t s = (*cand)[uniform_index(rng, cand->size())];
        Tensor row = opt.constant_conditioning ? detail::unit_e1(store.dim())
                                               : store.row(s);
        for (std::size_t j = 0; j < store.dim(); ++j) h.at(t, j) = row.data[j];
        group_ids.push_back(s);
        gen_labels.push_back(label);
      }
      gen_batches.push_back(gen(z, h, &y));
    }
  }

  std::size_t total = 0;
  for (const Tensor& b : gen_batches) total += b.rows();
  Tensor gen_raw = Tensor::zeros({total, gen_batches.front().cols()});
  std::size_t at = 0;
  for (const Tensor& b : gen_batches) {
    for (std::size_t i = 0; i < b.rows(); ++i, ++at)
      for (std::size_t j = 0; j < b.cols(); ++j) gen_raw.at(at, j) = b.at(i, j);
  }
  Tensor gen_feats = embed_all(embedder, gen_raw).embeddings;

  EvalReport rep;
  rep.n_generated = total;
  rep.n_reference = ref_feats.rows();
  rep.fid = frechet_distance(ref_feats, gen_feats);
  PrecisionRecall pr = precision_recall(ref_feats, gen_feats, opt.k_pr);
  rep.precision = pr.precision;
  rep.recall = pr.recall;

  // diversity over conditioning groups that drew at least two samples
  {
    std::map<std::size_t, std::size_t> sizes;
    for (std::size_t g : group_ids) sizes[g] += 1;
    std::vector<std::size_t> keep_rows;
    std::vector<std::size_t> keep_groups;
    for (std::size_t i = 0; i < group_ids.size(); ++i) {
      if (sizes[group_ids[i]] >= 2) {
        keep_rows.push_back(i);
        keep_groups.push_back(group_ids[i]);
      }
    }
    if (!keep_groups.empty()) {
      Tensor df = Tensor::zeros({keep_rows.size(), gen_feats.cols()});
      for (std::size_t i = 0; i < keep_rows.size(); ++i)
        for (std::size_t j = 0; j < gen_feats.cols(); ++j)
          df.at(i, j) = gen_feats.at(keep_rows[i], j);
      rep.diversity = diversity(df, keep_groups);
    }
  }

  if (opt.class_conditional && !opt.train_class_counts.empty()) {
    StratifiedFid sf = stratified_fid(ref_feats, *reference_labels, gen_feats,
                                      gen_labels, opt.train_class_counts);
    rep.stratified = sf.fid;
    rep.stratified_n_real = sf.n_real;
    rep.stratified_n_gen = sf.n_gen;
  }
  return rep;
}

}  // namespace icgan
