#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "icgan/adam.hpp"
#include "icgan/embedding.hpp"
#include "icgan/models.hpp"
#include "icgan/neighborhoods.hpp"
#include "icgan/rng.hpp"
#include "icgan/tape.hpp"
#include "icgan/tensor.hpp"

namespace icgan {

enum class LossVariant { logistic_nonsaturating, logistic_saturating, hinge };

inline const char* to_string(LossVariant v) {
  switch (v) {
    case LossVariant::logistic_nonsaturating: return "logistic_nonsaturating";
    case LossVariant::logistic_saturating: return "logistic_saturating";
    case LossVariant::hinge: return "hinge";
  }
  return "?";
}

inline LossVariant loss_variant_from_string(const std::string& s) {
  if (s == "logistic_nonsaturating") return LossVariant::logistic_nonsaturating;
  if (s == "logistic_saturating") return LossVariant::logistic_saturating;
  if (s == "hinge") return LossVariant::hinge;
  throw std::invalid_argument("unknown loss variant '" + s + "'");
}

struct TrainConfig {
  std::size_t k = 50;
  LossVariant loss = LossVariant::logistic_nonsaturating;
  double g_lr = 1e-3;
  double d_lr = 1e-3;
  std::size_t d_updates = 1;
  std::size_t batch_size = 64;
  std::size_t steps = 5000;
  std::uint64_t seed = 1;
  bool flip_augmentation = false;
  bool class_conditional = false;
  std::optional<double> balance_temperature;
  // ablation baseline: every conditioning becomes the same fixed unit vector
  // and the neighborhood widens to the whole dataset
  bool constant_conditioning = false;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct ModelConfig {
  std::size_t z_dim = 16;
  std::size_t o_dim = 32;
  std::size_t c_dim = 8;
  std::size_t n_dim = 32;
  std::vector<std::size_t> g_hidden = {128, 128};
  std::vector<std::size_t> d_hidden = {128, 128};
  double leaky_slope = 0.2;
};

// --- adversarial losses over [B,1] logit nodes ---

inline NodeId d_loss_node(Tape& t, NodeId real_logits, NodeId fake_logits,
                          LossVariant v) {
  switch (v) {
    case LossVariant::logistic_nonsaturating:
    case LossVariant::logistic_saturating:
      return t.add(t.mean(t.softplus(t.neg(real_logits))),
                   t.mean(t.softplus(fake_logits)));
    case LossVariant::hinge:
      return t.add(t.mean(t.leaky_relu(t.affine(real_logits, -1.0, 1.0), 0.0)),
                   t.mean(t.leaky_relu(t.affine(fake_logits, 1.0, 1.0), 0.0)));
  }
  throw std::logic_error("d_loss_node: bad variant");
}

inline NodeId g_loss_node(Tape& t, NodeId fake_logits, LossVariant v) {
  switch (v) {
    case LossVariant::logistic_nonsaturating:
      return t.mean(t.softplus(t.neg(fake_logits)));
    case LossVariant::logistic_saturating:
      // minimizing this pushes the fake logits up, matching the minimax form
      return t.neg(t.mean(t.softplus(fake_logits)));
    case LossVariant::hinge:
      return t.neg(t.mean(fake_logits));
  }
  throw std::logic_error("g_loss_node: bad variant");
}

inline double d_loss(const Tensor& real_logits, const Tensor& fake_logits,
                     LossVariant v) {
  Tape t;
  return t.value(d_loss_node(t, t.leaf(real_logits), t.leaf(fake_logits), v)).data[0];
}

inline double g_loss(const Tensor& fake_logits, LossVariant v) {
  Tape t;
  return t.value(g_loss_node(t, t.leaf(fake_logits), v)).data[0];
}

// --- class balancing ---

// p_c proportional to f_c^(1/T); T=1 recovers the empirical distribution,
// larger T flattens it toward uniform.
inline std::vector<double> class_balanced_probs(const std::vector<double>& counts,
                                                double temperature) {
  if (counts.empty())
    throw std::invalid_argument("class_balanced_probs: no classes");
  if (!(temperature > 0.0))
    throw std::invalid_argument("class_balanced_probs: temperature must be "
                                "positive, got " + std::to_string(temperature));
  std::vector<double> p(counts.size());
  double total = 0.0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (!(counts[c] > 0.0))
      throw std::invalid_argument("class_balanced_probs: count for class " +
                                  std::to_string(c) + " must be positive");
    p[c] = std::exp(std::log(counts[c]) / temperature);
    total += p[c];
  }
  for (double& v : p) v /= total;
  return p;
}

// Draws a pool index by first picking a class from the tempered distribution,
// then a member uniformly within it.
struct ClassBalancedSampler {
  std::vector<int> class_ids;                     // ascending distinct labels
  std::vector<double> probs;                      // per class
  std::vector<double> cumulative;
  std::vector<std::vector<std::size_t>> members;  // pool indices per class

  static ClassBalancedSampler build(const std::vector<int>& pool_labels,
                                    double temperature) {
    if (pool_labels.empty())
      throw std::invalid_argument("class balancing: no labels");
    ClassBalancedSampler s;
    for (int l : pool_labels) {
      auto it = std::lower_bound(s.class_ids.begin(), s.class_ids.end(), l);
      if (it == s.class_ids.end() || *it != l) {
        std::size_t pos = it - s.class_ids.begin();
        s.class_ids.insert(it, l);
        s.members.emplace(s.members.begin() + pos);
      }
    }
    for (std::size_t i = 0; i < pool_labels.size(); ++i) {
      std::size_t c = std::lower_bound(s.class_ids.begin(), s.class_ids.end(),
                                       pool_labels[i]) -
                      s.class_ids.begin();
      s.members[c].push_back(i);
    }
    std::vector<double> counts;
    for (const auto& m : s.members) counts.push_back(static_cast<double>(m.size()));
    s.probs = class_balanced_probs(counts, temperature);
    double acc = 0.0;
    for (double p : s.probs) {
      acc += p;
      s.cumulative.push_back(acc);
    }
    s.cumulative.back() = 1.0;
    return s;
  }

  std::size_t sample(std::mt19937_64& rng) const {
    double u = uniform_real(rng);
    std::size_t c = std::lower_bound(cumulative.begin(), cumulative.end(), u) -
                    cumulative.begin();
    if (c >= members.size()) c = members.size() - 1;
    const auto& m = members[c];
    return m[uniform_index(rng, m.size())];
  }
};

// --- conditioning pool ---

// Mirror a dataset across the first raw coordinate.
inline Tensor flip_rows(const Tensor& raw) {
  Tensor out = raw;
  for (std::size_t i = 0; i < out.rows(); ++i) out.at(i, 0) = -out.at(i, 0);
  return out;
}

// The set of conditionings the sampler draws from. With flip augmentation the
// pool doubles: entry M+i is the embedding of the mirrored point i and reuses
// the neighborhood of i. The constant mode pins every conditioning to e_1.
struct AugmentedStore {
  Tensor embeddings;               // [M, d_e] base rows
  Tensor flipped;                  // [M, d_e] or empty
  std::optional<std::vector<int>> labels;
  bool constant = false;

  std::size_t base_size() const { return embeddings.rows(); }
  std::size_t pool_size() const {
    return flipped.numel() ? 2 * base_size() : base_size();
  }
  std::size_t original(std::size_t pool_i) const { return pool_i % base_size(); }

  int label(std::size_t pool_i) const {
    if (!labels)
      throw std::logic_error("conditioning pool: unlabeled store has no labels");
    return (*labels)[original(pool_i)];
  }

  std::vector<int> pool_labels() const {
    std::vector<int> out;
    out.reserve(pool_size());
    for (std::size_t i = 0; i < pool_size(); ++i) out.push_back(label(i));
    return out;
  }

  void write_h(std::size_t pool_i, Tensor& dst, std::size_t row) const {
    std::size_t d = embeddings.cols();
    if (constant) {
      dst.at(row, 0) = 1.0;
      for (std::size_t j = 1; j < d; ++j) dst.at(row, j) = 0.0;
      return;
    }
    const Tensor& src = pool_i < base_size() ? embeddings : flipped;
    std::size_t r = original(pool_i);
    for (std::size_t j = 0; j < d; ++j) dst.at(row, j) = src.at(r, j);
  }
};

inline AugmentedStore build_pool(const InstanceStore& store, const Tensor& raw,
                                 const Embedder& embedder, bool flip,
                                 bool constant) {
  AugmentedStore pool;
  pool.embeddings = store.embeddings;
  pool.labels = store.labels;
  pool.constant = constant;
  if (flip) {
    InstanceStore f = embed_all(embedder, flip_rows(raw));
    pool.flipped = std::move(f.embeddings);
  }
  return pool;
}

// --- training loop ---

struct StepMetrics {
  std::size_t step = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
};

struct TrainState {
  TrainConfig cfg;
  ModelConfig mcfg;
  Tensor raw;
  InstanceStore store;
  AugmentedStore pool;
  NeighborhoodIndex nbrs;
  std::optional<ClassBalancedSampler> balanced;
  GeneratorParams g;
  DiscriminatorParams d;
  AdamState g_opt, d_opt;
  NoiseSpec noise;
  std::mt19937_64 rng;
  std::size_t step = 0;
  std::size_t n_classes = 0;
};

namespace detail {

struct CondBatch {
  Tensor h;     // [B, d_e]
  Tensor real;  // [B, d_x]
  std::vector<std::size_t> y;
};

inline CondBatch draw_batch(TrainState& st) {
  std::size_t B = st.cfg.batch_size;
  std::size_t d_e = st.store.dim();
  std::size_t d_x = st.raw.cols();
  CondBatch b;
  b.h = Tensor::zeros({B, d_e});
  b.real = Tensor::zeros({B, d_x});
  if (st.cfg.class_conditional) b.y.resize(B);
  for (std::size_t i = 0; i < B; ++i) {
    std::size_t pool_i = st.balanced ? st.balanced->sample(st.rng)
                                     : sample_conditioning(st.pool.pool_size(), st.rng);
    st.pool.write_h(pool_i, b.h, i);
    std::size_t j = sample_neighbor(st.nbrs, st.pool.original(pool_i), st.rng);
    for (std::size_t t = 0; t < d_x; ++t) b.real.at(i, t) = st.raw.at(j, t);
    if (st.cfg.class_conditional) b.y[i] = static_cast<std::size_t>((*st.store.labels)[j]);
  }
  return b;
}

inline std::vector<const Tensor*> grads_of(const Tape& t,
                                           const std::vector<NodeId>& ids) {
  std::vector<const Tensor*> g;
  g.reserve(ids.size());
  for (NodeId id : ids) g.push_back(&t.grad(id));
  return g;
}

}  // namespace detail

inline void validate(const TrainConfig& c) {
  if (c.batch_size < 1) throw std::invalid_argument("train config: batch_size must be positive");
  if (c.d_updates < 1) throw std::invalid_argument("train config: d_updates must be positive");
  if (c.k < 1) throw std::invalid_argument("train config: k must be positive");
  if (c.g_lr < 0.0 || c.d_lr < 0.0)
    throw std::invalid_argument("train config: learning rates must be non-negative");
  if (c.balance_temperature && !(*c.balance_temperature > 0.0))
    throw std::invalid_argument("train config: balance temperature must be positive");
}

inline TrainState make_train_state(const TrainConfig& cfg, const ModelConfig& mcfg,
                                   const Tensor& raw,
                                   const std::optional<std::vector<int>>& labels,
                                   const Embedder& embedder) {
  validate(cfg);
  if (cfg.class_conditional && !labels)
    throw std::invalid_argument("train: class-conditional run needs labels");
  if (cfg.balance_temperature && !labels)
    throw std::invalid_argument("train: class balancing needs labels");

  TrainState st;
  st.cfg = cfg;
  st.mcfg = mcfg;
  st.raw = raw;
  st.store = embed_all(embedder, raw, labels);
  std::size_t M = st.store.size();

  if (labels) {
    int max_label = -1;
    for (int l : *labels) {
      if (l < 0) throw std::invalid_argument("train: labels must be non-negative");
      max_label = std::max(max_label, l);
    }
    st.n_classes = static_cast<std::size_t>(max_label + 1);
  }

  std::size_t k_eff = cfg.constant_conditioning ? M : cfg.k;
  st.nbrs = build_neighborhoods(st.store, k_eff);
  st.pool = build_pool(st.store, raw, embedder, cfg.flip_augmentation,
                       cfg.constant_conditioning);
  if (cfg.balance_temperature)
    st.balanced = ClassBalancedSampler::build(st.pool.pool_labels(),
                                              *cfg.balance_temperature);

  GeneratorConfig gc;
  gc.z_dim = mcfg.z_dim;
  gc.embed_dim = st.store.dim();
  gc.o_dim = mcfg.o_dim;
  gc.c_dim = mcfg.c_dim;
  gc.n_classes = cfg.class_conditional ? st.n_classes : 0;
  gc.hidden = mcfg.g_hidden;
  gc.out_dim = raw.cols();
  gc.leaky_slope = mcfg.leaky_slope;

  DiscriminatorConfig dc;
  dc.in_dim = raw.cols();
  dc.embed_dim = st.store.dim();
  dc.n_dim = mcfg.n_dim;
  dc.c_dim = mcfg.c_dim;
  dc.n_classes = cfg.class_conditional ? st.n_classes : 0;
  dc.hidden = mcfg.d_hidden;
  dc.leaky_slope = mcfg.leaky_slope;

  st.g = init_generator(gc, derive_seed(cfg.seed, 1));
  st.d = init_discriminator(dc, derive_seed(cfg.seed, 2));
  st.g_opt = AdamState{cfg.g_lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
  st.d_opt = AdamState{cfg.d_lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
  st.noise.dim = mcfg.z_dim;
  st.rng = make_rng(derive_seed(cfg.seed, 0));
  return st;
}

// One optimization step: d_updates discriminator passes on fresh batches,
// then one generator pass. Fakes in the discriminator passes are detached;
// the generator pass runs through the discriminator without touching its
// parameters.
inline StepMetrics train_step(TrainState& st) {
  const bool cc = st.cfg.class_conditional;
  StepMetrics out;
  out.step = st.step;

  for (std::size_t u = 0; u < st.cfg.d_updates; ++u) {
    detail::CondBatch b = detail::draw_batch(st);
    Tensor z = sample_noise(st.noise, st.cfg.batch_size, st.rng);
    Tensor fake = generate(st.g, z, b.h, cc ? &b.y : nullptr);
    Tape t;
    DiscriminatorNodes dn = stage(t, st.d);
    NodeId hh = t.leaf(b.h);
    NodeId lr = discriminator_forward(t, st.d.cfg, dn, t.leaf(b.real), hh,
                                      cc ? &b.y : nullptr);
    NodeId lf = discriminator_forward(t, st.d.cfg, dn, t.leaf(fake), hh,
                                      cc ? &b.y : nullptr);
    NodeId loss = d_loss_node(t, lr, lf, st.cfg.loss);
    t.backward(loss);
    adam_step(st.d_opt, st.d.param_ptrs(), detail::grads_of(t, dn.flat));
    out.d_loss = t.value(loss).data[0];
  }

  {
    detail::CondBatch b = detail::draw_batch(st);
    Tensor z = sample_noise(st.noise, st.cfg.batch_size, st.rng);
    Tape t;
    GeneratorNodes gn = stage(t, st.g);
    DiscriminatorNodes dn = stage(t, st.d);
    NodeId hh = t.leaf(b.h);
    NodeId fake = generator_forward(t, st.g.cfg, gn, t.leaf(z), hh,
                                    cc ? &b.y : nullptr);
    NodeId lf = discriminator_forward(t, st.d.cfg, dn, fake, hh,
                                      cc ? &b.y : nullptr);
    NodeId loss = g_loss_node(t, lf, st.cfg.loss);
    t.backward(loss);
    adam_step(st.g_opt, st.g.param_ptrs(), detail::grads_of(t, gn.flat));
    out.g_loss = t.value(loss).data[0];
  }

  st.step += 1;
  return out;
}

struct TrainResult {
  GeneratorParams g;
  DiscriminatorParams d;
  InstanceStore store;
  NeighborhoodIndex nbrs;
  std::vector<StepMetrics> metrics;
};

using StepHook = std::function<void(const TrainState&, const StepMetrics&)>;

inline TrainResult train(const TrainConfig& cfg, const ModelConfig& mcfg,
                         const Tensor& raw,
                         const std::optional<std::vector<int>>& labels,
                         const Embedder& embedder, const StepHook& hook = {}) {
  TrainState st = make_train_state(cfg, mcfg, raw, labels, embedder);
  TrainResult res;
  res.metrics.reserve(cfg.steps);
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    StepMetrics m = train_step(st);
    res.metrics.push_back(m);
    if (hook) hook(st, m);
  }
  res.g = std::move(st.g);
  res.d = std::move(st.d);
  res.store = std::move(st.store);
  res.nbrs = std::move(st.nbrs);
  return res;
}

}  // namespace icgan
