#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "hgnn/graph.hpp"
#include "hgnn/model.hpp"
#include "hgnn/reference.hpp"
#include "hgnn/rng.hpp"
#include "hgnn/tensor.hpp"
#include "test_util.hpp"

using namespace hgnn;

namespace {

DeviceLog make_log(const std::vector<int>& urls) {
  DeviceLog log;
  log.device_id = "dev";
  int64_t ts = 0;
  for (int u : urls) log.events.push_back({ts++, {u}});
  return log;
}

ModelConfig toy_config(int vocab = 10) {
  ModelConfig cfg;
  cfg.K = 2;
  cfg.d = 6;
  cfg.fine_rounds = 2;
  cfg.hetero_rounds = 1;
  cfg.dropout = 0.0;
  cfg.vocab_size = vocab;
  cfg.seed = 5;
  cfg.pool_dim = 5;
  cfg.filter_dim = 4;
  return cfg;
}

void zero_params(ParamStore& store, const std::string& prefix) {
  for (Param& p : store)
    if (p.name.rfind(prefix, 0) == 0)
      std::fill(p.values.begin(), p.values.end(), 0.0);
}

void set_identity(Param& p) {
  std::fill(p.values.begin(), p.values.end(), 0.0);
  for (int64_t i = 0; i < p.shape[0]; ++i)
    p.values[static_cast<size_t>(i * p.shape[1] + i)] = 1.0;
}

DeviceLog random_log(RngStream& rng, size_t max_len = 12, uint64_t alphabet = 8) {
  auto len = static_cast<size_t>(1 + rng.below(max_len));
  std::vector<int> urls(len);
  for (auto& u : urls) u = static_cast<int>(rng.below(alphabet));
  return make_log(urls);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace

TEST_CASE("init_params is deterministic and shaped as configured") {
  ModelConfig cfg = toy_config(1000);
  cfg.d = 64;
  cfg.pool_dim = 64;
  cfg.filter_dim = 64;
  ParamStore a = init_params(cfg);
  ParamStore b = init_params(cfg);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a.at(i).name == b.at(i).name);
    CHECK(a.at(i).values == b.at(i).values);
  }
  CHECK(a.at("embedding").shape == Shape{1000, 64});

  ModelConfig other = cfg;
  other.seed = 6;
  ParamStore c = init_params(other);
  CHECK(c.at("embedding").values != a.at("embedding").values);
}

TEST_CASE("init_params total matches the hand tally") {
  // tally per structure, written out independently of init_params:
  //   embedding                    V*d
  //   per fine round (GRU)         3*(d*2d) + 3*d
  //   per hetero round             3*d*d        (W1, W2, W3)
  //   cross-attention projection   d*d
  //   feature filter               da*d + d*da  (W5, W4)
  //   pooling MLP                  p*d + p + p*p + p
  //   classifier MLP               p*2p + p + 1*p + 1
  ModelConfig cfg = toy_config(1000);
  cfg.d = 64;
  cfg.pool_dim = 64;
  cfg.filter_dim = 64;
  int64_t v = cfg.vocab_size, d = cfg.d, p = cfg.pool_dim, da = cfg.filter_dim;
  int64_t expected = v * d;
  expected += cfg.fine_rounds * (3 * (d * 2 * d) + 3 * d);
  expected += cfg.hetero_rounds * 3 * d * d;
  expected += d * d;
  expected += da * d + d * da;
  expected += p * d + p + p * p + p;
  expected += p * 2 * p + p + p + 1;
  CHECK(init_params(cfg).total_scalars() == expected);
  CHECK(expected == 154753);  // frozen for the default dims (V=1000, d=p=da=64)
}

TEST_CASE("fine_message_round with zero GRU weights halves the features") {
  ModelConfig cfg = toy_config();
  ParamStore params = init_params(cfg);
  zero_params(params, "fine0.");
  HierGraph g = build_hier_graph(make_log({0, 1, 0, 2, 3}), cfg.K);
  Tape t;
  Tensor x = embed_nodes(t, g, params, cfg);
  Tensor out = fine_message_round(t, g, x, params, cfg, 0);
  for (size_t i = 0; i < out.values().size(); ++i)
    CHECK(out.values()[i] == 0.5 * x.values()[i]);
}

TEST_CASE("fine_message_round on a single isolated node") {
  ModelConfig cfg = toy_config();
  ParamStore params = init_params(cfg);
  HierGraph g = build_hier_graph(make_log({4}), cfg.K);
  Tape t;
  Tensor x = embed_nodes(t, g, params, cfg);
  Tensor out = fine_message_round(t, g, x, params, cfg, 0);

  // kappa = 0: the GRU runs over [x] alone from a zero state
  GruWeights w = bind_gru(t, params, "fine0.gru");
  Tensor m = gru_step(t.zeros({cfg.d}), t.row(x, 0), w);
  Tensor want = t.scale(t.add(t.row(x, 0), m), 0.5);
  CHECK(out.values() == want.values());
}

TEST_CASE("fine_message_round matches the serial reference") {
  ModelConfig cfg = toy_config();
  ParamStore params = init_params(cfg);
  RngStream rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    HierGraph g = build_hier_graph(random_log(rng), cfg.K);
    ref::Mat x0 = ref::embed_nodes(g, params, cfg);
    ref::Mat want = ref::fine_message_round(g, x0, params, cfg, 0);
    Tape t;
    Tensor x = embed_nodes(t, g, params, cfg);
    Tensor got = fine_message_round(t, g, x, params, cfg, 0);
    CHECK(max_abs_diff(got.values(), want.a) < 1e-12);
  }
}

TEST_CASE("coarse_update means member projections") {
  ModelConfig cfg = toy_config();
  ParamStore params = init_params(cfg);
  set_identity(params.at("het0.w1"));

  // two members with features [1,...] and [3,...] -> coarse [2,...]
  HierGraph g = build_hier_graph(make_log({0, 1}), 2);
  Tape t;
  std::vector<double> xv(static_cast<size_t>(2 * cfg.d));
  for (int j = 0; j < cfg.d; ++j) {
    xv[static_cast<size_t>(j)] = 1.0;
    xv[static_cast<size_t>(cfg.d + j)] = 3.0;
  }
  Tensor x = t.constant({2, cfg.d}, xv);
  Tensor xc = coarse_update(t, g, x, params, cfg, 0);
  REQUIRE(xc.shape() == Shape{1, cfg.d});
  for (double v : xc.values()) CHECK(v == doctest::Approx(2.0).epsilon(1e-15));

  // single-member coarse node copies the member
  HierGraph lone = build_hier_graph(make_log({5}), 2);
  Tensor xl = t.constant({1, cfg.d}, testutil::random_values(static_cast<size_t>(cfg.d), 3));
  Tensor xcl = coarse_update(t, lone, xl, params, cfg, 0);
  CHECK(max_abs_diff(xcl.values(), xl.values()) < 1e-15);
}

TEST_CASE("coarse_update matches the serial reference") {
  ModelConfig cfg = toy_config();
  ParamStore params = init_params(cfg);
  RngStream rng(405);
  for (int trial = 0; trial < 50; ++trial) {
    HierGraph g = build_hier_graph(random_log(rng), cfg.K);
    ref::Mat x0 = ref::embed_nodes(g, params, cfg);
    ref::Mat want = ref::coarse_update(g, x0, params, cfg, 0);
    Tape t;
    Tensor x = embed_nodes(t, g, params, cfg);
    Tensor got = coarse_update(t, g, x, params, cfg, 0);
    CHECK(max_abs_diff(got.values(), want.a) < 1e-12);
  }
}

TEST_CASE("fine_hetero_update with identical coarse features is a plain mean") {
  ModelConfig cfg = toy_config();
  ParamStore params = init_params(cfg);
  HierGraph g = build_hier_graph(make_log({0, 1, 2, 3, 4, 5, 0, 2}), 3);
  REQUIRE(g.coarse_count > 1);
  Tape t;
  Tensor x = embed_nodes(t, g, params, cfg);
  auto common = testutil::random_values(static_cast<size_t>(cfg.d), 9);
  std::vector<double> tiled;
  for (int j = 0; j < g.coarse_count; ++j)
    tiled.insert(tiled.end(), common.begin(), common.end());
  Tensor xc = t.constant({g.coarse_count, cfg.d}, tiled);
  Tensor out = fine_hetero_update(t, g, x, xc, params, cfg, 0);
  // attention is a convex combination, so the aggregate is the common vector
  for (int64_t i = 0; i < g.fine_count(); ++i)
    for (int j = 0; j < cfg.d; ++j) {
      double want = (x.values()[static_cast<size_t>(i * cfg.d + j)] +
                     common[static_cast<size_t>(j)]) * 0.5;
      CHECK(out.values()[static_cast<size_t>(i * cfg.d + j)] ==
            doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("single coarse neighbor forces attention weight one") {
  ModelConfig cfg = toy_config();
  ParamStore params = init_params(cfg);
  HierGraph g = build_hier_graph(make_log({0, 1, 2}), 5);  // one coarse node
  Tape t;
  Tensor x = embed_nodes(t, g, params, cfg);
  Tensor xc = coarse_update(t, g, x, params, cfg, 0);
  Tensor out = fine_hetero_update(t, g, x, xc, params, cfg, 0);
  for (int64_t i = 0; i < g.fine_count(); ++i)
    for (int j = 0; j < cfg.d; ++j) {
      double want = (x.values()[static_cast<size_t>(i * cfg.d + j)] +
                     xc.values()[static_cast<size_t>(j)]) * 0.5;
      CHECK(out.values()[static_cast<size_t>(i * cfg.d + j)] == want);
    }
}

TEST_CASE("fine_hetero_update matches the serial reference") {
  ModelConfig cfg = toy_config();
  ParamStore params = init_params(cfg);
  RngStream rng(406);
  for (int trial = 0; trial < 50; ++trial) {
    HierGraph g = build_hier_graph(random_log(rng), cfg.K);
    ref::Mat x0 = ref::embed_nodes(g, params, cfg);
    ref::Mat xc = ref::coarse_update(g, x0, params, cfg, 0);
    ref::Mat want = ref::fine_hetero_update(g, x0, xc, params, cfg, 0);
    Tape t;
    Tensor x = embed_nodes(t, g, params, cfg);
    Tensor xct = coarse_update(t, g, x, params, cfg, 0);
    Tensor got = fine_hetero_update(t, g, x, xct, params, cfg, 0);
    CHECK(max_abs_diff(got.values(), want.a) < 1e-12);
  }
}

TEST_CASE("encode_device shape, determinism, and reference equivalence") {
  ModelConfig cfg = toy_config();
  ParamStore params = init_params(cfg);

  HierGraph single = build_hier_graph(make_log({3}), cfg.K);
  Tape t0;
  EncodedDevice e0 = encode_device(t0, single, params, cfg);
  CHECK(e0.x.shape() == Shape{1, cfg.d});

  HierGraph g = build_hier_graph(make_log({0, 1, 0, 2, 2, 4}), cfg.K);
  Tape t1, t2;
  EncodedDevice a = encode_device(t1, g, params, cfg);
  EncodedDevice b = encode_device(t2, g, params, cfg);
  CHECK(a.x.values() == b.x.values());
  for (double v : a.x.values()) CHECK(std::isfinite(v));

  ref::Mat want = ref::encode_device(g, params, cfg);
  CHECK(max_abs_diff(a.x.values(), want.a) < 1e-12);
}

TEST_CASE("locality: unreachable tokens cannot move a node's embedding") {
  ModelConfig cfg = toy_config();
  ParamStore params = init_params(cfg);

  // two disjoint chains 0->1 and 2->3 in separate coarse groups
  HierGraph g;
  g.fine_keys = {{0}, {1}, {2}, {3}};
  g.fine_edges = {{0, 1}, {2, 3}};
  g.in_neighbors = {{}, {0}, {}, {2}};
  g.seq_fine_idx = {0, 1, 2, 3};
  g.K = 2;
  g.coarse_count = 2;
  g.membership = {{0, 1}, {2, 3}};
  g.coarse_of = {{0}, {0}, {1}, {1}};

  Tape t1;
  EncodedDevice before = encode_device(t1, g, params, cfg);
  params.at("embedding").values[3 * static_cast<size_t>(cfg.d) + 2] += 0.75;
  Tape t2;
  EncodedDevice after = encode_device(t2, g, params, cfg);

  for (int64_t i = 0; i < 2; ++i)  // nodes 0 and 1 cannot see token 3
    for (int j = 0; j < cfg.d; ++j)
      CHECK(before.x.values()[static_cast<size_t>(i * cfg.d + j)] ==
            after.x.values()[static_cast<size_t>(i * cfg.d + j)]);
  CHECK(before.x.values() != after.x.values());  // but node 3 moved
}

TEST_CASE("encode_device gradients match finite differences on a toy log") {
  ModelConfig cfg = toy_config();
  ParamStore params = init_params(cfg);
  HierGraph g = build_hier_graph(make_log({0, 1, 0, 2, 2, 4}), cfg.K);

  // weight the output so every coordinate participates
  auto wv = testutil::random_values(static_cast<size_t>(g.fine_count() * cfg.d), 77);
  auto f = [&](const ParamStore& s) {
    Tape t;
    EncodedDevice e = encode_device(t, g, s, cfg);
    Tensor w = t.constant({g.fine_count(), cfg.d}, wv);
    return t.sum_all(t.hadamard(e.x, w)).scalar();
  };
  auto fd = finite_diff_grad(f, params);
  Tape t;
  EncodedDevice e = encode_device(t, g, params, cfg);
  Tensor w = t.constant({g.fine_count(), cfg.d}, wv);
  t.backward(t.sum_all(t.hadamard(e.x, w)));
  CHECK(testutil::max_rel_err(t.param_grads(), fd) < 1e-3);
}
