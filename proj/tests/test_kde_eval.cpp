#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <optional>
#include <vector>

#include "icgan/embedding.hpp"
#include "icgan/evaluate.hpp"
#include "icgan/kde.hpp"
#include "icgan/metrics.hpp"
#include "icgan/rng.hpp"
#include "icgan/tensor.hpp"

using icgan::Tensor;

namespace {

Tensor circle_points(std::size_t n, double radius) {
  Tensor t = Tensor::zeros({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    double a = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n);
    t.at(i, 0) = radius * std::cos(a);
    t.at(i, 1) = radius * std::sin(a);
  }
  return t;
}

icgan::Embedder identity2() {
  icgan::EmbedderSpec spec;
  spec.kind = icgan::EmbedderKind::identity;
  spec.output_dim = 2;
  Tensor probe = Tensor::zeros({2, 2});
  probe.at(0, 0) = 1.0;
  probe.at(1, 1) = 1.0;
  return icgan::fit_embedder(probe, spec);
}

icgan::SelectionResult select_all(std::size_t n) {
  icgan::SelectionResult sel;
  sel.method = icgan::SelectionMethod::random;
  sel.indices.resize(n);
  for (std::size_t i = 0; i < n; ++i) sel.indices[i] = i;
  return sel;
}

// records every batch the evaluator hands to the generator
struct Recorder {
  std::vector<Tensor> zs, hs;
  std::vector<std::vector<std::size_t>> ys;
};

// generator that outputs its conditioning row unchanged
icgan::GeneratorFn echo_h(Recorder* rec = nullptr) {
  return [rec](const Tensor& z, const Tensor& h, const std::vector<std::size_t>* y) {
    if (rec) {
      rec->zs.push_back(z);
      rec->hs.push_back(h);
      rec->ys.push_back(y ? *y : std::vector<std::size_t>{});
    }
    return h;
  };
}

icgan::GeneratorFn constant_point(double x0, double x1) {
  return [x0, x1](const Tensor& z, const Tensor&, const std::vector<std::size_t>*) {
    Tensor out = Tensor::zeros({z.rows(), 2});
    for (std::size_t i = 0; i < z.rows(); ++i) {
      out.at(i, 0) = x0;
      out.at(i, 1) = x1;
    }
    return out;
  };
}

bool same_report(const icgan::EvalReport& a, const icgan::EvalReport& b) {
  return std::memcmp(&a.fid, &b.fid, sizeof(double)) == 0 &&
         std::memcmp(&a.precision, &b.precision, sizeof(double)) == 0 &&
         std::memcmp(&a.recall, &b.recall, sizeof(double)) == 0 &&
         a.diversity == b.diversity && a.stratified == b.stratified &&
         a.n_generated == b.n_generated && a.n_reference == b.n_reference;
}

}  // namespace

TEST_CASE("kde with sigma zero replays support points exactly") {
  Tensor support = Tensor::zeros({5, 2});
  for (std::size_t i = 0; i < 5; ++i) {
    support.at(i, 0) = 0.1 * static_cast<double>(i) + 0.3;
    support.at(i, 1) = -1.7 * static_cast<double>(i);
  }
  auto kde = icgan::fit_kde(support, 0.0);
  auto rng = icgan::make_rng(11);
  Tensor draws = icgan::kde_sample(kde, 200, rng);
  std::vector<bool> hit(5, false);
  for (std::size_t i = 0; i < 200; ++i) {
    bool found = false;
    for (std::size_t s = 0; s < 5; ++s) {
      if (draws.at(i, 0) == support.at(s, 0) && draws.at(i, 1) == support.at(s, 1)) {
        found = true;
        hit[s] = true;
        break;
      }
    }
    REQUIRE(found);
  }
  for (std::size_t s = 0; s < 5; ++s) REQUIRE(hit[s]);
}

TEST_CASE("kde sample covariance is the support covariance plus sigma^2 I") {
  auto srng = icgan::make_rng(21);
  Tensor support = icgan::normal_tensor(srng, {60, 2}, 1.0);
  for (std::size_t i = 0; i < 60; ++i) support.at(i, 1) *= 2.0;

  double sigma = 0.5;
  auto kde = icgan::fit_kde(support, sigma);
  std::size_t n = 100000;
  auto rng = icgan::make_rng(22);
  Tensor draws = icgan::kde_sample(kde, n, rng);
  auto m = icgan::features_to_moments(draws);

  // population covariance of the uniform support mixture, plus sigma^2 I
  std::size_t N = support.rows();
  double mu[2] = {0.0, 0.0};
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < 2; ++j) mu[j] += support.at(i, j);
  for (double& v : mu) v /= static_cast<double>(N);
  double target[2][2] = {{sigma * sigma, 0.0}, {0.0, sigma * sigma}};
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t b = 0; b < 2; ++b)
        target[a][b] +=
            (support.at(i, a) - mu[a]) * (support.at(i, b) - mu[b]) /
            static_cast<double>(N);

  for (std::size_t a = 0; a < 2; ++a) {
    REQUIRE(m.mean.data[a] ==
            Catch::Approx(mu[a]).margin(4.0 * std::sqrt(target[a][a] / n)));
    for (std::size_t b = 0; b < 2; ++b) {
      double se = std::sqrt(
          (target[a][a] * target[b][b] + target[a][b] * target[a][b]) /
          static_cast<double>(n));
      REQUIRE(m.cov.at(a, b) == Catch::Approx(target[a][b]).margin(4.0 * se));
    }
  }
}

TEST_CASE("scott bandwidth scales with support size and spread") {
  Tensor support = Tensor::zeros({4, 2});
  support.at(1, 0) = 2.0;
  support.at(3, 0) = 2.0;
  // col0 std = 2/sqrt(3), col1 std = 0, so the mean marginal std is 1/sqrt(3)
  double want = std::pow(4.0, -1.0 / 6.0) / std::sqrt(3.0);
  REQUIRE(icgan::scott_bandwidth(support) == Catch::Approx(want).margin(1e-12));
  REQUIRE(icgan::fit_kde(support).sigma == Catch::Approx(want).margin(1e-15));
  REQUIRE(icgan::fit_kde(support, 0.25).sigma == 0.25);

  REQUIRE_THROWS_AS(icgan::fit_kde(support, -1.0), std::invalid_argument);
  REQUIRE_THROWS_AS(icgan::fit_kde(Tensor::zeros({0, 2})), std::invalid_argument);
  REQUIRE_THROWS_AS(icgan::scott_bandwidth(Tensor::zeros({1, 2})),
                    std::invalid_argument);
}

TEST_CASE("a memorizing generator scores near-zero fid, a collapsed one does not") {
  Tensor raw = circle_points(64, 2.0);
  auto emb = identity2();
  auto store = icgan::embed_all(emb, raw);
  auto sel = select_all(64);

  icgan::EvalOptions opt;
  opt.samples_per_instance = 4;
  opt.k_pr = 3;
  opt.z_dim = 4;
  opt.seed = 9;

  auto good = icgan::evaluate(echo_h(), store, sel, raw, std::nullopt, emb, opt);
  REQUIRE(good.n_generated == 256);
  REQUIRE(good.n_reference == 64);
  REQUIRE(good.fid < 0.01);
  REQUIRE(good.precision == 1.0);
  REQUIRE(good.recall == 1.0);
  REQUIRE(good.diversity.has_value());
  REQUIRE(*good.diversity == 0.0);  // every draw of one instance is identical

  auto bad = icgan::evaluate(constant_point(2.0, 0.0), store, sel, raw,
                             std::nullopt, emb, opt);
  REQUIRE(bad.fid > 0.5);
  REQUIRE(bad.fid > 100.0 * good.fid);
  REQUIRE(bad.recall < 0.2);
  REQUIRE(bad.diversity.has_value());
  REQUIRE(*bad.diversity == 0.0);
}

TEST_CASE("evaluation reports are deterministic") {
  Tensor raw = circle_points(32, 2.0);
  auto emb = identity2();
  auto store = icgan::embed_all(emb, raw);
  auto sel = select_all(32);
  icgan::EvalOptions opt;
  opt.samples_per_instance = 2;
  opt.k_pr = 2;
  opt.z_dim = 3;
  opt.seed = 5;
  auto a = icgan::evaluate(echo_h(), store, sel, raw, std::nullopt, emb, opt);
  auto b = icgan::evaluate(echo_h(), store, sel, raw, std::nullopt, emb, opt);
  REQUIRE(same_report(a, b));
}

TEST_CASE("each instance draws from its own noise substream") {
  Tensor raw = circle_points(16, 2.0);
  auto emb = identity2();
  auto store = icgan::embed_all(emb, raw);
  icgan::EvalOptions opt;
  opt.samples_per_instance = 3;
  opt.k_pr = 2;
  opt.z_dim = 4;
  opt.seed = 77;

  icgan::SelectionResult fwd;
  fwd.indices = {2, 5, 9, 11};
  icgan::SelectionResult rev;
  rev.indices = {11, 9, 5, 2};

  Recorder ra, rb;
  icgan::evaluate(echo_h(&ra), store, fwd, raw, std::nullopt, emb, opt);
  icgan::evaluate(echo_h(&rb), store, rev, raw, std::nullopt, emb, opt);
  REQUIRE(ra.zs.size() == 4);
  REQUIRE(rb.zs.size() == 4);
  // instance 2 was first in one order, last in the other; same z either way
  for (std::size_t pos = 0; pos < 4; ++pos) {
    const Tensor& za = ra.zs[pos];
    const Tensor& zb = rb.zs[3 - pos];
    REQUIRE(za.data == zb.data);
    REQUIRE(ra.hs[pos].data == rb.hs[3 - pos].data);
  }
}

TEST_CASE("constant conditioning pins h to the first axis") {
  Tensor raw = circle_points(16, 2.0);
  auto emb = identity2();
  auto store = icgan::embed_all(emb, raw);
  auto sel = select_all(16);
  icgan::EvalOptions opt;
  opt.samples_per_instance = 2;
  opt.k_pr = 2;
  opt.z_dim = 4;
  opt.seed = 3;
  opt.constant_conditioning = true;

  Recorder rec;
  icgan::evaluate(echo_h(&rec), store, sel, raw, std::nullopt, emb, opt);
  for (const Tensor& h : rec.hs)
    for (std::size_t i = 0; i < h.rows(); ++i) {
      REQUIRE(h.at(i, 0) == 1.0);
      REQUIRE(h.at(i, 1) == 0.0);
    }
}

TEST_CASE("labeled evaluation matches reference class counts") {
  // two clusters: class 0 near the +x axis, class 1 near -x
  Tensor raw = Tensor::zeros({12, 2});
  std::vector<int> labels(12);
  for (std::size_t i = 0; i < 12; ++i) {
    bool left = i >= 6;
    raw.at(i, 0) = (left ? -2.0 : 2.0);
    raw.at(i, 1) = 0.1 * static_cast<double>(i % 6);
    labels[i] = left ? 1 : 0;
  }
  auto emb = identity2();
  auto store = icgan::embed_all(emb, raw, labels);
  auto sel = select_all(12);

  // reference skewed 8:4 between the classes
  Tensor ref = Tensor::zeros({12, 2});
  std::vector<int> ref_labels(12);
  for (std::size_t i = 0; i < 12; ++i) {
    bool left = i >= 8;
    ref.at(i, 0) = (left ? -2.0 : 2.0);
    ref.at(i, 1) = 0.05 * static_cast<double>(i);
    ref_labels[i] = left ? 1 : 0;
  }

  icgan::EvalOptions opt;
  opt.k_pr = 2;
  opt.z_dim = 4;
  opt.seed = 13;
  opt.class_conditional = true;
  opt.train_class_counts = {150, 10};

  Recorder rec;
  auto rep = icgan::evaluate(echo_h(&rec), store, sel, ref, ref_labels, emb, opt);
  REQUIRE(rep.n_generated == 12);
  REQUIRE(rec.ys.size() == 2);  // one batch per reference class
  std::size_t n0 = 0, n1 = 0;
  for (const auto& y : rec.ys) {
    REQUIRE(!y.empty());
    for (std::size_t v : y) REQUIRE(v == y.front());
    if (y.front() == 0) n0 = y.size();
    if (y.front() == 1) n1 = y.size();
  }
  REQUIRE(n0 == 8);
  REQUIRE(n1 == 4);

  // every conditioning row must be a stored embedding of the batch's class
  for (std::size_t b = 0; b < rec.hs.size(); ++b) {
    int label = static_cast<int>(rec.ys[b].front());
    const Tensor& h = rec.hs[b];
    for (std::size_t i = 0; i < h.rows(); ++i) {
      bool matched = false;
      for (std::size_t s = 0; s < store.size(); ++s) {
        if ((*store.labels)[s] != label) continue;
        Tensor row = store.row(s);
        if (h.at(i, 0) == row.data[0] && h.at(i, 1) == row.data[1]) {
          matched = true;
          break;
        }
      }
      REQUIRE(matched);
    }
  }

  // train_class_counts of 150 and 10 put the classes in different buckets
  REQUIRE(rep.stratified.size() == 2);
  REQUIRE(rep.stratified.count("many") == 1);
  REQUIRE(rep.stratified.count("few") == 1);
  REQUIRE(rep.stratified_n_real.at("many") == 8);
  REQUIRE(rep.stratified_n_gen.at("many") == 8);

  // without training counts the stratified block stays empty
  opt.train_class_counts.clear();
  auto plain = icgan::evaluate(echo_h(), store, sel, ref, ref_labels, emb, opt);
  REQUIRE(plain.stratified.empty());
}

TEST_CASE("labeled evaluation rejects missing labels") {
  Tensor raw = circle_points(12, 2.0);
  auto emb = identity2();
  auto unlabeled = icgan::embed_all(emb, raw);
  std::vector<int> labels(12, 0);
  auto labeled = icgan::embed_all(emb, raw, labels);
  auto sel = select_all(12);

  icgan::EvalOptions opt;
  opt.k_pr = 2;
  opt.z_dim = 4;
  opt.class_conditional = true;

  REQUIRE_THROWS_AS(
      icgan::evaluate(echo_h(), unlabeled, sel, raw, labels, emb, opt),
      std::invalid_argument);
  REQUIRE_THROWS_AS(
      icgan::evaluate(echo_h(), labeled, sel, raw, std::nullopt, emb, opt),
      std::invalid_argument);
  // reference mentions a class the store has never seen
  std::vector<int> alien(12, 7);
  REQUIRE_THROWS_AS(icgan::evaluate(echo_h(), labeled, sel, raw, alien, emb, opt),
                    std::invalid_argument);
}

TEST_CASE("evaluate validates selection and sample counts") {
  Tensor raw = circle_points(12, 2.0);
  auto emb = identity2();
  auto store = icgan::embed_all(emb, raw);
  icgan::EvalOptions opt;
  opt.k_pr = 2;
  opt.z_dim = 4;

  icgan::SelectionResult empty;
  REQUIRE_THROWS_AS(icgan::evaluate(echo_h(), store, empty, raw, std::nullopt, emb, opt),
                    std::invalid_argument);

  icgan::SelectionResult oob;
  oob.indices = {0, 12};
  REQUIRE_THROWS_AS(icgan::evaluate(echo_h(), store, oob, raw, std::nullopt, emb, opt),
                    std::invalid_argument);

  auto sel = select_all(12);
  opt.samples_per_instance = 0;
  REQUIRE_THROWS_AS(icgan::evaluate(echo_h(), store, sel, raw, std::nullopt, emb, opt),
                    std::invalid_argument);
}

TEST_CASE("diversity is omitted when every conditioning draws one sample") {
  Tensor raw = circle_points(20, 2.0);
  auto emb = identity2();
  auto store = icgan::embed_all(emb, raw);
  auto sel = select_all(20);
  icgan::EvalOptions opt;
  opt.samples_per_instance = 1;
  opt.k_pr = 3;
  opt.z_dim = 4;
  auto rep = icgan::evaluate(echo_h(), store, sel, raw, std::nullopt, emb, opt);
  REQUIRE(rep.n_generated == 20);
  REQUIRE(!rep.diversity.has_value());
}
