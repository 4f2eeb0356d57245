#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "hgnn/tensor.hpp"
#include "test_util.hpp"

using namespace hgnn;
using testutil::add_random;
using testutil::max_rel_err;
using testutil::rel_err;

TEST_CASE("matmul identity and selector") {
  Tape t;
  Tensor i2 = t.constant({2, 2}, {1, 0, 0, 1});
  Tensor a = t.constant({2, 2}, {1, 2, 3, 4});
  CHECK(t.matmul(i2, a).values() == std::vector<double>{1, 2, 3, 4});

  Tensor sel = t.constant({1, 2}, {1, 0});
  Tensor col = t.constant({2, 1}, {5, 7});
  CHECK(t.matmul(sel, col).values() == std::vector<double>{5});
}

TEST_CASE("matmul rejects mismatched shapes") {
  Tape t;
  Tensor a = t.constant({2, 3}, std::vector<double>(6, 1.0));
  Tensor b = t.constant({2, 3}, std::vector<double>(6, 1.0));
  CHECK_THROWS_WITH_AS(t.matmul(a, b),
                       doctest::Contains("[2x3]"), ShapeError);
}

TEST_CASE("matmul gradient matches finite differences") {
  ParamStore store;
  add_random(store, "a", {3, 4}, 11);
  add_random(store, "b", {4, 2}, 22);
  auto f = [](const ParamStore& s) {
    Tape t;
    Tensor a = t.param(s, "a");
    Tensor b = t.param(s, "b");
    return t.sum_all(t.matmul(a, b)).scalar();
  };
  auto fd = finite_diff_grad(f, store);
  Tape t;
  Tensor a = t.param(store, "a");
  Tensor b = t.param(store, "b");
  Tensor loss = t.sum_all(t.matmul(a, b));
  t.backward(loss);
  CHECK(max_rel_err(t.param_grads(), fd) < 1e-4);
}

TEST_CASE("softmax_rows basics") {
  Tape t;
  Tensor u = t.constant({1, 3}, {1, 1, 1});
  auto v = t.softmax_rows(u).values();
  for (double x : v) CHECK(x == doctest::Approx(1.0 / 3).epsilon(1e-12));

  Tensor single = t.constant({1, 1}, {42.0});
  CHECK(t.softmax_rows(single).values() == std::vector<double>{1.0});
}

TEST_CASE("softmax_rows survives huge logits") {
  Tape t;
  Tensor big = t.constant({1, 2}, {1000.0, 0.0});
  auto v = t.softmax_rows(big).values();
  // oracle: alpha_j = 1 / sum_k exp(x_k - x_j), evaluated in long double
  long double x[2] = {1000.0L, 0.0L};
  for (int j = 0; j < 2; ++j) {
    long double denom = 0.0L;
    for (int k = 0; k < 2; ++k) denom += expl(x[k] - x[j]);
    CHECK(rel_err(v[static_cast<size_t>(j)], static_cast<double>(1.0L / denom)) < 1e-12);
  }
  CHECK(std::isfinite(v[0]));
  CHECK(v[0] + v[1] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("softmax_rows rows sum to one on random shapes") {
  RngStream shape_rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    auto m = static_cast<int64_t>(1 + shape_rng.below(8));
    auto n = static_cast<int64_t>(1 + shape_rng.below(8));
    Tape t;
    Tensor logits = t.constant(
        {m, n}, testutil::random_values(static_cast<size_t>(m * n),
                                        1000 + static_cast<uint64_t>(trial), -30, 30));
    auto v = t.softmax_rows(logits).values();
    for (int64_t i = 0; i < m; ++i) {
      double sum = 0.0;
      for (int64_t j = 0; j < n; ++j) {
        double x = v[static_cast<size_t>(i * n + j)];
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
        sum += x;
      }
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("softmax_rows mask zeroes entries exactly and rejects dead rows") {
  Tape t;
  Tensor logits = t.constant({2, 3}, {5, 1, 2, 0, 0, 0});
  std::vector<uint8_t> mask = {1, 0, 1, 1, 1, 1};
  auto v = t.softmax_rows(logits, mask).values();
  CHECK(v[1] == 0.0);
  CHECK(v[0] + v[2] == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<uint8_t> dead = {0, 0, 0, 1, 1, 1};
  CHECK_THROWS_WITH_AS(t.softmax_rows(logits, dead),
                       doctest::Contains("row 0"), ShapeError);
}

TEST_CASE("softmax_rows gradient matches finite differences") {
  ParamStore store;
  add_random(store, "x", {3, 5}, 7);
  auto f = [](const ParamStore& s) {
    Tape t;
    Tensor sm = t.softmax_rows(t.param(s, "x"));
    // weight entries asymmetrically so the Jacobian is exercised off-diagonal
    Tensor w = t.constant({3, 5}, testutil::random_values(15, 1234));
    return t.sum_all(t.hadamard(sm, w)).scalar();
  };
  auto fd = finite_diff_grad(f, store);
  Tape t;
  Tensor sm = t.softmax_rows(t.param(store, "x"));
  Tensor w = t.constant({3, 5}, testutil::random_values(15, 1234));
  t.backward(t.sum_all(t.hadamard(sm, w)));
  CHECK(max_rel_err(t.param_grads(), fd) < 1e-4);
}

TEST_CASE("elementwise basics") {
  Tape t;
  Tensor a = t.constant({3}, {1, 2, 3});
  Tensor zero = t.constant({3}, {0, 0, 0});
  CHECK(t.hadamard(a, zero).values() == std::vector<double>{0, 0, 0});

  Tensor z = t.constant({1}, {0.0});
  CHECK(t.sigmoid(z).values() == std::vector<double>{0.5});

  Tensor m = t.constant({2, 2}, {1, 5, 3, 2});
  CHECK(t.max_pool_rows(m).values() == std::vector<double>{3, 5});
}

TEST_CASE("max_pool_rows ties route gradient to the lowest row") {
  Tape t;
  Tensor x = t.leaf({2, 2}, {7, 1, 7, 5}, /*needs_grad=*/true);
  Tensor pooled = t.max_pool_rows(x);
  t.backward(t.sum_all(pooled));
  CHECK(x.grad() == std::vector<double>{1, 0, 0, 1});
}

TEST_CASE("gru_step zero weights halve the state") {
  ParamStore store;
  int d = 5;
  store.add("g.w_z", {d, 2 * d});
  store.add("g.w_r", {d, 2 * d});
  store.add("g.w_h", {d, 2 * d});
  store.add("g.b_z", {d});
  store.add("g.b_r", {d});
  store.add("g.b_h", {d});

  Tape t;
  GruWeights w = bind_gru(t, store, "g");
  std::vector<double> hv = {0.3, -1.5, 2.0, 0.0, 4.25};
  Tensor h = t.constant({d}, hv);
  Tensor x = t.constant({d}, testutil::random_values(5, 3));
  auto out = gru_step(h, x, w).values();
  for (int i = 0; i < d; ++i)
    CHECK(out[static_cast<size_t>(i)] == 0.5 * hv[static_cast<size_t>(i)]);

  Tensor zx = t.zeros({d});
  Tensor zh = t.zeros({d});
  for (double v : gru_step(zh, zx, w).values()) CHECK(v == 0.0);
}

TEST_CASE("gru_step rejects mismatched dims") {
  ParamStore store;
  store.add("g.w_z", {4, 8});
  store.add("g.w_r", {4, 8});
  store.add("g.w_h", {4, 8});
  store.add("g.b_z", {4});
  store.add("g.b_r", {4});
  store.add("g.b_h", {4});
  Tape t;
  GruWeights w = bind_gru(t, store, "g");
  Tensor h = t.zeros({3});
  Tensor x = t.zeros({3});
  CHECK_THROWS_AS(gru_step(h, x, w), ShapeError);
}

TEST_CASE("gru_step gradient matches finite differences for every weight") {
  int d = 4;
  ParamStore store;
  add_random(store, "g.w_z", {d, 2 * d}, 1, -0.5, 0.5);
  add_random(store, "g.w_r", {d, 2 * d}, 2, -0.5, 0.5);
  add_random(store, "g.w_h", {d, 2 * d}, 3, -0.5, 0.5);
  add_random(store, "g.b_z", {d}, 4, -0.5, 0.5);
  add_random(store, "g.b_r", {d}, 5, -0.5, 0.5);
  add_random(store, "g.b_h", {d}, 6, -0.5, 0.5);
  auto hv = testutil::random_values(static_cast<size_t>(d), 7);
  auto xv = testutil::random_values(static_cast<size_t>(d), 8);

  auto f = [&](const ParamStore& s) {
    Tape t;
    GruWeights w = bind_gru(t, s, "g");
    Tensor out = gru_step(t.constant({d}, hv), t.constant({d}, xv), w);
    return t.sum_all(out).scalar();
  };
  auto fd = finite_diff_grad(f, store);
  Tape t;
  GruWeights w = bind_gru(t, store, "g");
  t.backward(t.sum_all(gru_step(t.constant({d}, hv), t.constant({d}, xv), w)));
  CHECK(max_rel_err(t.param_grads(), fd) < 1e-4);
}

TEST_CASE("backward on a linear map broadcasts the input") {
  // loss = sum(W x): dL/dW = x^T in every row
  ParamStore store;
  Param& w = store.add("w", {2, 3});
  w.values = {1, 1, 1, 1, 1, 1};
  std::vector<double> xv = {2.0, -3.0, 5.0};
  Tape t;
  Tensor wt = t.param(store, "w");
  Tensor x = t.constant({3}, xv);
  t.backward(t.sum_all(t.matvec(wt, x)));
  CHECK(wt.grad() == std::vector<double>{2, -3, 5, 2, -3, 5});
}

TEST_CASE("backward leaves unreachable parameters at zero") {
  ParamStore store;
  add_random(store, "used", {2, 2}, 1);
  add_random(store, "unused", {2, 2}, 2);
  Tape t;
  Tensor u = t.param(store, "used");
  Tensor dead = t.param(store, "unused");
  (void)dead;
  t.backward(t.sum_all(u));
  auto grads = t.param_grads();
  CHECK(grads[1] == std::vector<double>{0, 0, 0, 0});
}

TEST_CASE("backward accumulates across repeated calls") {
  ParamStore store;
  add_random(store, "w", {2, 2}, 1);
  Tape t;
  Tensor w = t.param(store, "w");
  Tensor loss = t.sum_all(w);
  t.backward(loss);
  auto once = t.param_grads();
  t.backward(loss);
  auto twice = t.param_grads();
  for (size_t i = 0; i < once[0].size(); ++i)
    CHECK(twice[0][i] == 2.0 * once[0][i]);
  t.zero_grad();
  t.backward(loss);
  CHECK(t.param_grads()[0] == once[0]);
}

TEST_CASE("backward rejects non-scalar loss") {
  Tape t;
  Tensor v = t.leaf({3}, {1, 2, 3}, true);
  CHECK_THROWS_AS(t.backward(v), ShapeError);
}

TEST_CASE("two-layer perceptron: backward agrees with finite differences") {
  ParamStore store;
  add_random(store, "w1", {4, 3}, 21, -0.7, 0.7);
  add_random(store, "b1", {4}, 22, -0.2, 0.2);
  add_random(store, "w2", {1, 4}, 23, -0.7, 0.7);
  auto xv = testutil::random_values(3, 31);
  auto run = [&](const ParamStore& s, Tape& t) {
    Tensor h = t.tanh_act(t.add(t.matvec(t.param(s, "w1"), t.constant({3}, xv)),
                                t.param(s, "b1")));
    return t.sum_all(t.matvec(t.param(s, "w2"), h));
  };
  auto f = [&](const ParamStore& s) {
    Tape t;
    return run(s, t).scalar();
  };
  auto fd = finite_diff_grad(f, store, 1e-5);
  Tape t;
  t.backward(run(store, t));
  CHECK(max_rel_err(t.param_grads(), fd) < 1e-6);
}

TEST_CASE("finite_diff_grad analytic spot checks") {
  ParamStore store;
  Param& th = store.add("theta", {1});
  th.values = {3.0};
  auto square = [](const ParamStore& s) {
    double v = s.at("theta").values[0];
    return v * v;
  };
  auto g = finite_diff_grad(square, store, 1e-5);
  CHECK(std::abs(g[0][0] - 6.0) < 1e-8);

  auto constant = [](const ParamStore&) { return 1.25; };
  auto gz = finite_diff_grad(constant, store, 1e-5);
  CHECK(gz[0][0] == 0.0);

  CHECK_THROWS_AS(finite_diff_grad(square, store, 0.0), ShapeError);
}

TEST_CASE("bce values and gradient") {
  Tape t;
  Tensor half = t.constant({1}, {0.5});
  CHECK(t.bce(half, 1.0).scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  Tensor near_one = t.constant({1}, {1.0 - 1e-9});
  CHECK(t.bce(near_one, 1.0).scalar() < 1e-6);

  // d/dy_hat of BCE(y_hat, 0) = 1/(1-y_hat)
  Tensor yh = t.leaf({1}, {0.3}, true);
  t.backward(t.bce(yh, 0.0));
  CHECK(rel_err(yh.grad()[0], 1.0 / 0.7) < 1e-6);
}

TEST_CASE("dropout is identity at rate zero and masks at high rate") {
  Tape t;
  Tensor x = t.constant({100}, testutil::random_values(100, 5));
  RngStream rng(42);
  CHECK(t.dropout(x, 0.0, rng).values() == x.values());

  RngStream rng2(43);
  auto v = t.dropout(x, 0.5, rng2).values();
  size_t zeros = 0;
  for (size_t i = 0; i < v.size(); ++i) {
    if (v[i] == 0.0) ++zeros;
    else CHECK(v[i] == doctest::Approx(x.values()[i] * 2.0));
  }
  CHECK(zeros > 20);
  CHECK(zeros < 80);
}

TEST_CASE("forward and gradients are deterministic for identical seeds") {
  auto run = [](uint64_t seed) {
    ParamStore store;
    add_random(store, "w", {6, 6}, seed);
    Tape t;
    Tensor w = t.param(store, "w");
    Tensor y = t.sigmoid(t.matmul(w, w));
    t.backward(t.sum_all(y));
    return std::make_pair(y.values(), t.param_grads());
  };
  auto a = run(77);
  auto b = run(77);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("reshape, gather, concat round gradients through") {
  ParamStore store;
  add_random(store, "m", {4, 3}, 9);
  auto f = [](const ParamStore& s) {
    Tape t;
    Tensor m = t.param(s, "m");
    Tensor g = t.gather_rows(m, {1, 1, 3});
    Tensor r = t.reshape(t.row(g, 0), {3});
    Tensor c = t.concat(r, t.mean_pool_rows(g));
    return t.sum_all(t.relu(c)).scalar();
  };
  auto fd = finite_diff_grad(f, store);
  Tape t;
  Tensor m = t.param(store, "m");
  Tensor g = t.gather_rows(m, {1, 1, 3});
  Tensor r = t.reshape(t.row(g, 0), {3});
  Tensor c = t.concat(r, t.mean_pool_rows(g));
  t.backward(t.sum_all(t.relu(c)));
  CHECK(max_rel_err(t.param_grads(), fd) < 1e-4);
}
