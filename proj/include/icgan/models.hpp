#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "icgan/rng.hpp"
#include "icgan/tape.hpp"
#include "icgan/tensor.hpp"

namespace icgan {

struct NoiseSpec {
  std::size_t dim = 16;
  double stddev = 1.0;
};

inline Tensor sample_noise(const NoiseSpec& spec, std::size_t batch,
                           std::mt19937_64& rng) {
  return normal_tensor(rng, {batch, spec.dim}, spec.stddev);
}

// MLP generator. The instance embedding goes through its own affine layer
// to o_dim, then rides along with z (and the class embedding) into the trunk.
struct GeneratorConfig {
  std::size_t z_dim = 16;
  std::size_t embed_dim = 2;
  std::size_t o_dim = 32;
  std::size_t c_dim = 8;
  std::size_t n_classes = 0;  // 0 means unconditional
  std::vector<std::size_t> hidden = {128, 128};
  std::size_t out_dim = 2;
  double leaky_slope = 0.2;

  bool class_conditional() const { return n_classes > 0; }
};

struct GeneratorParams {
  GeneratorConfig cfg;
  Tensor h_proj_w, h_proj_b;
  Tensor class_embed;         // [n_classes, c_dim], conditional only
  std::vector<Tensor> w, b;   // hidden layers, then the output layer

  template <class F>
  void for_each(F f) {
    f("g.h_proj_w", h_proj_w);
    f("g.h_proj_b", h_proj_b);
    if (cfg.class_conditional()) f("g.class_embed", class_embed);
    for (std::size_t i = 0; i < w.size(); ++i) {
      f(("g.w" + std::to_string(i)).c_str(), w[i]);
      f(("g.b" + std::to_string(i)).c_str(), b[i]);
    }
  }
  template <class F>
  void for_each(F f) const {
    const_cast<GeneratorParams*>(this)->for_each(
        [&](const char* n, Tensor& t) { f(n, static_cast<const Tensor&>(t)); });
  }

  std::vector<Tensor*> param_ptrs() {
    std::vector<Tensor*> out;
    for_each([&](const char*, Tensor& t) { out.push_back(&t); });
    return out;
  }
};

inline void validate(const GeneratorConfig& c) {
  if (c.z_dim == 0 || c.embed_dim == 0 || c.o_dim == 0 || c.out_dim == 0 ||
      c.hidden.empty())
    throw std::invalid_argument("generator config: dimensions must be positive");
  if (c.class_conditional() && c.c_dim == 0)
    throw std::invalid_argument("generator config: c_dim must be positive when "
                                "class conditional");
}

inline GeneratorParams init_generator(const GeneratorConfig& cfg,
                                      std::uint64_t seed) {
  validate(cfg);
  std::mt19937_64 rng = make_rng(seed);
  auto he = [&](std::size_t fan_in, std::size_t fan_out) {
    return normal_tensor(rng, {fan_in, fan_out},
                         std::sqrt(2.0 / static_cast<double>(fan_in)));
  };
  GeneratorParams p;
  p.cfg = cfg;
  p.h_proj_w = he(cfg.embed_dim, cfg.o_dim);
  p.h_proj_b = Tensor::zeros({cfg.o_dim});
  if (cfg.class_conditional())
    p.class_embed = normal_tensor(rng, {cfg.n_classes, cfg.c_dim},
                                  1.0 / std::sqrt(static_cast<double>(cfg.c_dim)));
  std::size_t in = cfg.z_dim + cfg.o_dim + (cfg.class_conditional() ? cfg.c_dim : 0);
  for (std::size_t hsz : cfg.hidden) {
    p.w.push_back(he(in, hsz));
    p.b.push_back(Tensor::zeros({hsz}));
    in = hsz;
  }
  p.w.push_back(he(in, cfg.out_dim));
  p.b.push_back(Tensor::zeros({cfg.out_dim}));
  return p;
}

// Tape-side handles for one staged copy of the parameters.
struct GeneratorNodes {
  NodeId h_proj_w = -1, h_proj_b = -1, class_embed = -1;
  std::vector<NodeId> w, b;
  std::vector<NodeId> flat;  // for_each order, matches param_ptrs()
};

inline GeneratorNodes stage(Tape& tape, const GeneratorParams& p) {
  GeneratorNodes n;
  n.h_proj_w = tape.leaf(p.h_proj_w);
  n.h_proj_b = tape.leaf(p.h_proj_b);
  n.flat = {n.h_proj_w, n.h_proj_b};
  if (p.cfg.class_conditional()) {
    n.class_embed = tape.leaf(p.class_embed);
    n.flat.push_back(n.class_embed);
  }
  for (std::size_t i = 0; i < p.w.size(); ++i) {
    n.w.push_back(tape.leaf(p.w[i]));
    n.b.push_back(tape.leaf(p.b[i]));
    n.flat.push_back(n.w[i]);
    n.flat.push_back(n.b[i]);
  }
  return n;
}

inline NodeId generator_forward(Tape& tape, const GeneratorConfig& cfg,
                                const GeneratorNodes& n, NodeId z, NodeId h,
                                const std::vector<std::size_t>* y) {
  if (cfg.class_conditional() && y == nullptr)
    throw std::invalid_argument("generator: class-conditional model needs labels");
  if (!cfg.class_conditional() && y != nullptr)
    throw std::invalid_argument("generator: unconditional model got labels");
  if (tape.value(z).cols() != cfg.z_dim)
    throw std::invalid_argument("generator: z has " +
                                std::to_string(tape.value(z).cols()) +
                                " cols, expected " + std::to_string(cfg.z_dim));
  if (tape.value(h).cols() != cfg.embed_dim)
    throw std::invalid_argument("generator: h has " +
                                std::to_string(tape.value(h).cols()) +
                                " cols, expected " + std::to_string(cfg.embed_dim));
  NodeId hp = tape.bias_add(tape.matmul(h, n.h_proj_w), n.h_proj_b);
  NodeId x = tape.concat(z, hp, 1);
  if (cfg.class_conditional()) {
    if (y->size() != tape.value(z).rows())
      throw std::invalid_argument("generator: " + std::to_string(y->size()) +
                                  " labels for batch of " +
                                  std::to_string(tape.value(z).rows()));
    x = tape.concat(x, tape.gather_rows(n.class_embed, *y), 1);
  }
  for (std::size_t i = 0; i + 1 < n.w.size(); ++i)
    x = tape.leaky_relu(tape.bias_add(tape.matmul(x, n.w[i]), n.b[i]),
                        cfg.leaky_slope);
  return tape.bias_add(tape.matmul(x, n.w.back()), n.b.back());
}

inline Tensor generate(const GeneratorParams& p, const Tensor& z, const Tensor& h,
                       const std::vector<std::size_t>* y = nullptr) {
  Tape tape;
  GeneratorNodes n = stage(tape, p);
  NodeId out = generator_forward(tape, p.cfg, n, tape.leaf(z), tape.leaf(h), y);
  return tape.value(out);
}

// Projection discriminator: trunk features phi(x), scalar head psi, plus
// inner products of projected conditioning against phi. In the conditional
// model the feature vector is split evenly between the instance term and the
// class term.
struct DiscriminatorConfig {
  std::size_t in_dim = 2;
  std::size_t embed_dim = 2;
  std::size_t n_dim = 32;
  std::size_t c_dim = 8;
  std::size_t n_classes = 0;
  std::vector<std::size_t> hidden = {128, 128};
  double leaky_slope = 0.2;

  bool class_conditional() const { return n_classes > 0; }
};

struct DiscriminatorParams {
  DiscriminatorConfig cfg;
  std::vector<Tensor> w, b;   // trunk, ending in the n_dim feature layer
  Tensor psi_w, psi_b;        // [n_dim,1], [1]
  Tensor p_h;                 // [embed_dim, n_dim] or [embed_dim, n_dim/2]
  Tensor class_embed;         // [n_classes, c_dim], conditional only
  Tensor p_y;                 // [c_dim, n_dim/2], conditional only

  template <class F>
  void for_each(F f) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      f(("d.w" + std::to_string(i)).c_str(), w[i]);
      f(("d.b" + std::to_string(i)).c_str(), b[i]);
    }
    f("d.psi_w", psi_w);
    f("d.psi_b", psi_b);
    f("d.p_h", p_h);
    if (cfg.class_conditional()) {
      f("d.class_embed", class_embed);
      f("d.p_y", p_y);
    }
  }
  template <class F>
  void for_each(F f) const {
    const_cast<DiscriminatorParams*>(this)->for_each(
        [&](const char* n, Tensor& t) { f(n, static_cast<const Tensor&>(t)); });
  }

  std::vector<Tensor*> param_ptrs() {
    std::vector<Tensor*> out;
    for_each([&](const char*, Tensor& t) { out.push_back(&t); });
    return out;
  }
};

inline void validate(const DiscriminatorConfig& c) {
  if (c.in_dim == 0 || c.embed_dim == 0 || c.n_dim == 0 || c.hidden.empty())
    throw std::invalid_argument("discriminator config: dimensions must be positive");
  if (c.class_conditional()) {
    if (c.c_dim == 0)
      throw std::invalid_argument("discriminator config: c_dim must be positive "
                                  "when class conditional");
    if (c.n_dim % 2 != 0)
      throw std::invalid_argument("discriminator config: n_dim must be even when "
                                  "class conditional, got " +
                                  std::to_string(c.n_dim));
  }
}

inline DiscriminatorParams init_discriminator(const DiscriminatorConfig& cfg,
                                              std::uint64_t seed) {
  validate(cfg);
  std::mt19937_64 rng = make_rng(seed);
  auto he = [&](std::size_t fan_in, std::size_t fan_out) {
    return normal_tensor(rng, {fan_in, fan_out},
                         std::sqrt(2.0 / static_cast<double>(fan_in)));
  };
  DiscriminatorParams p;
  p.cfg = cfg;
  std::size_t in = cfg.in_dim;
  for (std::size_t hsz : cfg.hidden) {
    p.w.push_back(he(in, hsz));
    p.b.push_back(Tensor::zeros({hsz}));
    in = hsz;
  }
  p.w.push_back(he(in, cfg.n_dim));
  p.b.push_back(Tensor::zeros({cfg.n_dim}));
  p.psi_w = he(cfg.n_dim, 1);
  p.psi_b = Tensor::zeros({1});
  std::size_t hw = cfg.class_conditional() ? cfg.n_dim / 2 : cfg.n_dim;
  p.p_h = he(cfg.embed_dim, hw);
  if (cfg.class_conditional()) {
    p.class_embed = normal_tensor(rng, {cfg.n_classes, cfg.c_dim},
                                  1.0 / std::sqrt(static_cast<double>(cfg.c_dim)));
    p.p_y = he(cfg.c_dim, cfg.n_dim / 2);
  }
  return p;
}

struct DiscriminatorNodes {
  std::vector<NodeId> w, b;
  NodeId psi_w = -1, psi_b = -1, p_h = -1, class_embed = -1, p_y = -1;
  std::vector<NodeId> flat;
};

inline DiscriminatorNodes stage(Tape& tape, const DiscriminatorParams& p) {
  DiscriminatorNodes n;
  for (std::size_t i = 0; i < p.w.size(); ++i) {
    n.w.push_back(tape.leaf(p.w[i]));
    n.b.push_back(tape.leaf(p.b[i]));
    n.flat.push_back(n.w[i]);
    n.flat.push_back(n.b[i]);
  }
  n.psi_w = tape.leaf(p.psi_w);
  n.psi_b = tape.leaf(p.psi_b);
  n.p_h = tape.leaf(p.p_h);
  n.flat.push_back(n.psi_w);
  n.flat.push_back(n.psi_b);
  n.flat.push_back(n.p_h);
  if (p.cfg.class_conditional()) {
    n.class_embed = tape.leaf(p.class_embed);
    n.p_y = tape.leaf(p.p_y);
    n.flat.push_back(n.class_embed);
    n.flat.push_back(n.p_y);
  }
  return n;
}

// Returns [B,1] logits.
inline NodeId discriminator_forward(Tape& tape, const DiscriminatorConfig& cfg,
                                    const DiscriminatorNodes& n, NodeId x, NodeId h,
                                    const std::vector<std::size_t>* y) {
  if (cfg.class_conditional() && y == nullptr)
    throw std::invalid_argument("discriminator: class-conditional model needs labels");
  if (!cfg.class_conditional() && y != nullptr)
    throw std::invalid_argument("discriminator: unconditional model got labels");
  if (tape.value(x).cols() != cfg.in_dim)
    throw std::invalid_argument("discriminator: x has " +
                                std::to_string(tape.value(x).cols()) +
                                " cols, expected " + std::to_string(cfg.in_dim));
  if (tape.value(h).rows() != tape.value(x).rows())
    throw std::invalid_argument("discriminator: batch sizes disagree, x " +
                                tape.value(x).shape_str() + " vs h " +
                                tape.value(h).shape_str());
  NodeId f = x;
  for (std::size_t i = 0; i < n.w.size(); ++i)
    f = tape.leaky_relu(tape.bias_add(tape.matmul(f, n.w[i]), n.b[i]),
                        cfg.leaky_slope);
  NodeId logit = tape.bias_add(tape.matmul(f, n.psi_w), n.psi_b);
  NodeId hp = tape.matmul(h, n.p_h);
  if (!cfg.class_conditional()) {
    logit = tape.add(logit, tape.rowwise_inner(hp, f));
  } else {
    if (y->size() != tape.value(x).rows())
      throw std::invalid_argument("discriminator: " + std::to_string(y->size()) +
                                  " labels for batch of " +
                                  std::to_string(tape.value(x).rows()));
    std::size_t half = cfg.n_dim / 2;
    NodeId fa = tape.slice_cols(f, 0, half);
    NodeId fb = tape.slice_cols(f, half, cfg.n_dim);
    NodeId yp = tape.matmul(tape.gather_rows(n.class_embed, *y), n.p_y);
    logit = tape.add(logit, tape.rowwise_inner(hp, fa));
    logit = tape.add(logit, tape.rowwise_inner(yp, fb));
  }
  return logit;
}

inline Tensor discriminate(const DiscriminatorParams& p, const Tensor& x,
                           const Tensor& h,
                           const std::vector<std::size_t>* y = nullptr) {
  Tape tape;
  DiscriminatorNodes n = stage(tape, p);
  NodeId out = discriminator_forward(tape, p.cfg, n, tape.leaf(x), tape.leaf(h), y);
  return tape.value(out);
}

}  // namespace icgan
