#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>

#include "icgan/adam.hpp"
#include "icgan/rng.hpp"
#include "icgan/tape.hpp"
#include "icgan/tensor.hpp"

using namespace icgan;

TEST_CASE("tensor shape and data must agree") {
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), std::invalid_argument);
  Tensor t = Tensor::zeros({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
}

TEST_CASE("leaf rejects non-finite input") {
  Tape tape;
  Tensor bad = Tensor::zeros({2});
  bad.data[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(tape.leaf(bad), std::invalid_argument);
  bad.data[1] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(tape.leaf(bad), std::invalid_argument);
}

TEST_CASE("forward primitive values") {
  Tape tape;

  SECTION("softplus at zero is log 2") {
    NodeId x = tape.leaf(Tensor::scalar(0.0));
    NodeId y = tape.softplus(x);
    CHECK(tape.value(y).data[0] == Catch::Approx(std::log(2.0)).epsilon(1e-12));
  }

  SECTION("softplus is stable for large inputs") {
    NodeId x = tape.leaf(Tensor::row_vector({800.0, -800.0}));
    NodeId y = tape.softplus(x);
    CHECK(tape.value(y).data[0] == Catch::Approx(800.0));
    CHECK(tape.value(y).data[1] >= 0.0);
    CHECK(tape.value(y).all_finite());
  }

  SECTION("sigmoid at zero is one half") {
    NodeId y = tape.sigmoid(tape.leaf(Tensor::scalar(0.0)));
    CHECK(tape.value(y).data[0] == Catch::Approx(0.5).epsilon(1e-12));
  }

  SECTION("matmul") {
    NodeId a = tape.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
    NodeId b = tape.leaf(Tensor({2, 1}, {5, 6}));
    NodeId c = tape.matmul(a, b);
    CHECK(tape.value(c).shape == std::vector<std::size_t>{2, 1});
    CHECK(tape.value(c).data[0] == Catch::Approx(17.0));
    CHECK(tape.value(c).data[1] == Catch::Approx(39.0));
  }

  SECTION("matmul rejects mismatched inner dims") {
    NodeId a = tape.leaf(Tensor::zeros({2, 3}));
    NodeId b = tape.leaf(Tensor::zeros({2, 3}));
    CHECK_THROWS_AS(tape.matmul(a, b), std::invalid_argument);
  }

  SECTION("bias_add broadcasts over rows") {
    NodeId x = tape.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
    NodeId b = tape.leaf(Tensor({2}, {10, 20}));
    NodeId y = tape.bias_add(x, b);
    CHECK(tape.value(y).data == std::vector<double>{11, 22, 13, 24});
  }

  SECTION("leaky_relu applies the slope below zero") {
    NodeId x = tape.leaf(Tensor::row_vector({-2.0, 3.0}));
    NodeId y = tape.leaky_relu(x, 0.2);
    CHECK(tape.value(y).data[0] == Catch::Approx(-0.4));
    CHECK(tape.value(y).data[1] == Catch::Approx(3.0));
  }

  SECTION("concat along both axes") {
    NodeId a = tape.leaf(Tensor({1, 2}, {1, 2}));
    NodeId b = tape.leaf(Tensor({1, 2}, {3, 4}));
    CHECK(tape.value(tape.concat(a, b, 0)).shape == std::vector<std::size_t>{2, 2});
    CHECK(tape.value(tape.concat(a, b, 1)).data == std::vector<double>{1, 2, 3, 4});
    CHECK_THROWS_AS(tape.concat(a, b, 2), std::invalid_argument);
  }

  SECTION("inner_product of mismatched shapes fails") {
    NodeId a = tape.leaf(Tensor::zeros({3}));
    NodeId b = tape.leaf(Tensor::zeros({4}));
    CHECK_THROWS_AS(tape.inner_product(a, b), std::invalid_argument);
  }
}

TEST_CASE("gradient of w.w at (1,2) is (2,4)") {
  Tape tape;
  NodeId w = tape.leaf(Tensor::row_vector({1.0, 2.0}));
  NodeId loss = tape.inner_product(w, w);
  tape.backward(loss);
  CHECK(tape.grad(w).data[0] == Catch::Approx(2.0).epsilon(1e-12));
  CHECK(tape.grad(w).data[1] == Catch::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("backward requires a scalar loss") {
  Tape tape;
  NodeId x = tape.leaf(Tensor::row_vector({1.0, 2.0}));
  CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
}

TEST_CASE("grad read before backward fails") {
  Tape tape;
  NodeId x = tape.leaf(Tensor::scalar(1.0));
  CHECK_THROWS_AS(tape.grad(x), std::logic_error);
}

TEST_CASE("a node used twice accumulates both contributions") {
  Tape tape;
  NodeId x = tape.leaf(Tensor::scalar(3.0));
  NodeId y = tape.add(x, x);
  tape.backward(tape.sum(y));
  CHECK(tape.grad(x).data[0] == Catch::Approx(2.0));
  // forward values stay intact after backward
  CHECK(tape.value(x).data[0] == 3.0);
  CHECK(tape.value(y).data[0] == 6.0);
}

namespace {

// Builds one loss touching every primitive, as a plain function of the
// parameter vector so the same graph can be replayed for finite differences.
struct FdModel {
  Tensor x;      // [3,4] fixed input
  Tensor table;  // gathered rows come from a parameter table

  double loss(const std::vector<Tensor>& params, Tape* out_tape = nullptr,
              std::vector<NodeId>* out_ids = nullptr) const {
    Tape local;
    Tape& t = out_tape ? *out_tape : local;
    std::vector<NodeId> ids;
    for (const Tensor& p : params) ids.push_back(t.leaf(p));
    // params: w1 [4,6], b1 [6], w2 [6,4], b2 [4], emb [5,4], v [3,4]
    NodeId xin = t.leaf(x);
    NodeId h1 = t.leaky_relu(t.bias_add(t.matmul(xin, ids[0]), ids[1]), 0.2);
    NodeId h2 = t.tanh(t.bias_add(t.matmul(h1, ids[2]), ids[3]));
    NodeId g = t.gather_rows(ids[4], {0, 2, 4});
    NodeId cat = t.concat(h2, g, 1);            // [3,8]
    NodeId sl = t.slice_cols(cat, 2, 6);        // [3,4]
    NodeId sg = t.sigmoid(sl);
    NodeId rw = t.rowwise_inner(sg, ids[5]);    // [3,1]
    NodeId sp = t.softplus(t.affine(rw, 0.5, -0.25));
    NodeId stacked = t.concat(sp, rw, 0);       // [6,1]
    NodeId a = t.add(t.mean(stacked), t.sum(sg));
    NodeId loss = t.add(a, t.inner_product(ids[3], ids[3]));
    t.backward(loss);
    if (out_ids) *out_ids = ids;
    return t.value(loss).data[0];
  }
};

}  // namespace

TEST_CASE("analytic gradients match central finite differences") {
  const double step = 1e-5;
  const double tol = 1e-4;
  for (std::uint64_t seed : {11ull, 22ull, 33ull}) {
    std::mt19937_64 rng = make_rng(seed);
    FdModel m;
    m.x = normal_tensor(rng, {3, 4});
    std::vector<Tensor> params;
    params.push_back(normal_tensor(rng, {4, 6}, 0.5));
    params.push_back(normal_tensor(rng, {6}, 0.5));
    params.push_back(normal_tensor(rng, {6, 4}, 0.5));
    params.push_back(normal_tensor(rng, {4}, 0.5));
    params.push_back(normal_tensor(rng, {5, 4}, 0.5));
    params.push_back(normal_tensor(rng, {3, 4}, 0.5));
    std::size_t total = 0;
    for (const Tensor& p : params) total += p.numel();
    REQUIRE(total <= 200);

    Tape tape;
    std::vector<NodeId> ids;
    m.loss(params, &tape, &ids);

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      for (std::size_t j = 0; j < params[pi].numel(); ++j) {
        std::vector<Tensor> up = params, dn = params;
        up[pi].data[j] += step;
        dn[pi].data[j] -= step;
        double fd = (m.loss(up) - m.loss(dn)) / (2.0 * step);
        double an = tape.grad(ids[pi]).data[j];
        double denom = std::max({1.0, std::abs(fd), std::abs(an)});
        INFO("seed " << seed << " param " << pi << " coord " << j);
        CHECK(std::abs(fd - an) / denom < tol);
      }
    }
  }
}

TEST_CASE("adam first step moves a unit-gradient scalar by lr") {
  AdamState st;
  st.lr = 0.1;
  Tensor w = Tensor::scalar(1.0);
  Tensor g = Tensor::scalar(1.0);
  adam_step(st, {&w}, {&g});
  // bias correction makes m_hat = v_hat = 1 on the first step
  CHECK(w.data[0] == Catch::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-12));
  CHECK(st.t == 1);
}

TEST_CASE("adam with zero learning rate leaves params bitwise unchanged") {
  AdamState st;
  st.lr = 0.0;
  std::mt19937_64 rng = make_rng(5);
  Tensor w = normal_tensor(rng, {4, 3});
  Tensor before = w;
  Tensor g = normal_tensor(rng, {4, 3});
  adam_step(st, {&w}, {&g});
  adam_step(st, {&w}, {&g});
  CHECK(std::memcmp(w.data.data(), before.data.data(),
                    w.numel() * sizeof(double)) == 0);
}

TEST_CASE("adam validates its inputs") {
  AdamState st;
  Tensor w = Tensor::scalar(1.0);
  Tensor g = Tensor::scalar(1.0);
  CHECK_THROWS_AS(adam_step(st, {&w}, {}), std::invalid_argument);
  adam_step(st, {&w}, {&g});
  Tensor w2 = Tensor::zeros({2});
  Tensor g2 = Tensor::zeros({2});
  CHECK_THROWS_AS(adam_step(st, {&w2, &w}, {&g2, &g}), std::invalid_argument);
}

TEST_CASE("identical seeds give bitwise identical gradients") {
  auto run = [](std::uint64_t seed) {
    std::mt19937_64 rng = make_rng(seed);
    Tensor w = normal_tensor(rng, {8, 8});
    Tensor x = normal_tensor(rng, {2, 8});
    Tape t;
    NodeId wi = t.leaf(w);
    NodeId loss = t.sum(t.tanh(t.matmul(t.leaf(x), wi)));
    t.backward(loss);
    return t.grad(wi).data;
  };
  auto a = run(99), b = run(99), c = run(100);
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  CHECK(a != c);
}
