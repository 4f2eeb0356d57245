#include "hgnn/model.hpp"

#include <cmath>
#include <string>

namespace hgnn {

namespace {

std::string fine_prefix(int round) { return "fine" + std::to_string(round) + ".gru"; }
std::string het_name(int round, const char* w) {
  return "het" + std::to_string(round) + "." + w;
}

void add_gru(ParamStore& s, const std::string& prefix, int d) {
  add_weight(s, prefix + ".w_z", {d, 2 * d}, 2 * d);
  add_weight(s, prefix + ".w_r", {d, 2 * d}, 2 * d);
  add_weight(s, prefix + ".w_h", {d, 2 * d}, 2 * d);
  add_bias(s, prefix + ".b_z", d);
  add_bias(s, prefix + ".b_r", d);
  add_bias(s, prefix + ".b_h", d);
}

}  // namespace

void ModelConfig::validate() const {
  if (K < 1) throw DataError("K must be >= 1");
  if (d < 1) throw DataError("embedding dim must be >= 1");
  if (fine_rounds < 1 || hetero_rounds < 1) throw DataError("round counts must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw DataError("dropout must be in [0,1)");
  if (vocab_size < 1) throw DataError("vocab_size must be >= 1");
  if (pool_dim < 1 || filter_dim < 1) throw DataError("head dims must be >= 1");
}

ParamStore init_params(const ModelConfig& cfg) {
  cfg.validate();
  ParamStore s;
  s.seed = cfg.seed;
  int d = cfg.d, p = cfg.pool_dim, da = cfg.filter_dim;
  // the table holds node features, not a linear map: unit-scale init keeps
  // the squared-distance head out of its vanishing regime
  add_weight(s, "embedding", {cfg.vocab_size, d}, 1);
  for (int r = 0; r < cfg.fine_rounds; ++r) add_gru(s, fine_prefix(r), d);
  for (int r = 0; r < cfg.hetero_rounds; ++r) {
    add_weight(s, het_name(r, "w1"), {d, d}, d);
    add_weight(s, het_name(r, "w2"), {d, d}, d);
    add_weight(s, het_name(r, "w3"), {d, d}, d);
  }
  if (cfg.head == ModelConfig::Head::CrossAttention) {
    add_weight(s, "cross.w3", {d, d}, d);
    add_weight(s, "filter.w5", {da, d}, d);
    add_weight(s, "filter.w4", {d, da}, da);
    add_weight(s, "pool.w1", {p, d}, d);
    add_bias(s, "pool.b1", p);
    add_weight(s, "pool.w2", {p, p}, p);
    add_bias(s, "pool.b2", p);
    add_weight(s, "cls.w1", {p, 2 * p}, 2 * p);
    add_bias(s, "cls.b1", p);
    add_weight(s, "cls.w2", {1, p}, p);
    add_bias(s, "cls.b2", 1);
  } else {
    add_weight(s, "abl.w1", {p, d}, d);
    add_bias(s, "abl.b1", p);
    add_weight(s, "abl.w2", {1, p}, p);
    add_bias(s, "abl.b2", 1);
  }
  return s;
}

Tensor embed_nodes(Tape& t, const HierGraph& g, const ParamStore& params,
                   const ModelConfig& cfg) {
  (void)cfg;
  Tensor table = t.param(params, "embedding");
  std::vector<Tensor> rows;
  rows.reserve(g.fine_keys.size());
  for (const UrlKey& key : g.fine_keys) {
    std::vector<int64_t> ids(key.begin(), key.end());
    Tensor toks = t.gather_rows(table, std::move(ids));
    rows.push_back(t.mean_pool_rows(toks));
  }
  return t.concat_rows(rows);
}

Tensor fine_message_round(Tape& t, const HierGraph& g, Tensor x,
                          const ParamStore& params, const ModelConfig& cfg,
                          int round) {
  if (x.shape()[0] != g.fine_count())
    throw ShapeError("fine_message_round: feature rows " +
                     std::to_string(x.shape()[0]) + " != fine nodes " +
                     std::to_string(g.fine_count()));
  GruWeights w = bind_gru(t, params, fine_prefix(round));
  Tensor h0 = t.zeros({cfg.d});
  std::vector<Tensor> out_rows;
  out_rows.reserve(g.fine_keys.size());
  for (int64_t i = 0; i < g.fine_count(); ++i) {
    Tensor h = h0;
    for (int j : g.in_neighbors[static_cast<size_t>(i)])
      h = gru_step(h, t.row(x, j), w);
    Tensor xi = t.row(x, i);
    Tensor m = gru_step(h, xi, w);  // own feature enters last
    out_rows.push_back(t.scale(t.add(xi, m), 0.5));
  }
  return t.concat_rows(out_rows);
}

Tensor coarse_update(Tape& t, const HierGraph& g, Tensor x,
                     const ParamStore& params, const ModelConfig& cfg,
                     int round) {
  Tensor w1 = t.param(params, het_name(round, "w1"));
  Tensor projected = t.matmul_nt(x, w1);  // rows are W1 x_i
  // averaging matrix: row j holds 1/|members| at member columns
  int64_t c = g.coarse_count, m = g.fine_count();
  std::vector<double> avg(static_cast<size_t>(c * m), 0.0);
  for (int64_t j = 0; j < c; ++j) {
    const auto& members = g.membership[static_cast<size_t>(j)];
    double inv = 1.0 / static_cast<double>(members.size());
    for (int f : members) avg[static_cast<size_t>(j * m + f)] = inv;
  }
  Tensor avg_t = t.constant({c, m}, std::move(avg));
  (void)cfg;
  return t.matmul(avg_t, projected);
}

Tensor fine_hetero_update(Tape& t, const HierGraph& g, Tensor x, Tensor xc,
                          const ParamStore& params, const ModelConfig& cfg,
                          int round) {
  Tensor w2 = t.param(params, het_name(round, "w2"));
  Tensor w3 = t.param(params, het_name(round, "w3"));
  Tensor q = t.matmul_nt(x, w2);   // [m, d]
  Tensor k = t.matmul_nt(xc, w3);  // [c, d]
  Tensor logits = t.scale(t.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(cfg.d)));
  int64_t m = g.fine_count(), c = g.coarse_count;
  std::vector<uint8_t> mask(static_cast<size_t>(m * c), 0);
  for (int64_t i = 0; i < m; ++i)
    for (int j : g.coarse_of[static_cast<size_t>(i)])
      mask[static_cast<size_t>(i * c + j)] = 1;
  Tensor alpha = t.softmax_rows(logits, mask);
  Tensor agg = t.matmul(alpha, xc);
  return t.scale(t.add(x, agg), 0.5);
}

EncodedDevice encode_device(Tape& t, const HierGraph& g,
                            const ParamStore& params, const ModelConfig& cfg) {
  Tensor x = embed_nodes(t, g, params, cfg);
  for (int r = 0; r < cfg.fine_rounds; ++r)
    x = fine_message_round(t, g, x, params, cfg, r);
  for (int r = 0; r < cfg.hetero_rounds; ++r) {
    Tensor xc = coarse_update(t, g, x, params, cfg, r);
    x = fine_hetero_update(t, g, x, xc, params, cfg, r);
  }
  return EncodedDevice{x, g.fine_count()};
}

namespace {

// Cross-attention matrix for encoding xv into xw: logits over xw's rows.
Tensor cross_attention_matrix(Tape& t, Tensor pv, Tensor pw,
                              const ModelConfig& cfg) {
  if (cfg.cross_logit == ModelConfig::CrossLogit::ScaledDot) {
    Tensor logits = t.scale(t.matmul_nt(pv, pw), 1.0 / std::sqrt(static_cast<double>(cfg.d)));
    return t.softmax_rows(logits);
  }
  // literal "simple mean": e_ij = mean over coordinates of (pv_i + pw_j)/2
  // = (rowmean(pv)_i + rowmean(pw)_j) / 2, assembled as an outer sum
  int64_t mv = pv.shape()[0], mw = pw.shape()[0], d = pv.shape()[1];
  Tensor inv_d = t.constant({d}, std::vector<double>(static_cast<size_t>(d),
                                                     1.0 / static_cast<double>(d)));
  Tensor rv = t.matvec(pv, inv_d);  // [m_v] per-row means
  Tensor rw = t.matvec(pw, inv_d);  // [m_w]
  Tensor ones_w = t.constant({mw, 1}, std::vector<double>(static_cast<size_t>(mw), 1.0));
  Tensor col = t.matmul_nt(t.reshape(rv, {mv, 1}), ones_w);  // rv_i down columns
  Tensor logits = t.add_rowvec(t.scale(col, 0.5), t.scale(rw, 0.5));
  return t.softmax_rows(logits);
}

}  // namespace

CrossEncoding cross_encode(Tape& t, Tensor xv, Tensor xw,
                           const ParamStore& params, const ModelConfig& cfg) {
  if (xv.shape()[0] < 1 || xw.shape()[0] < 1)
    throw ShapeError("cross_encode: empty embedding matrix");
  if (xv.shape()[1] != xw.shape()[1])
    throw ShapeError("cross_encode: dim mismatch " + shape_str(xv.shape()) +
                     " vs " + shape_str(xw.shape()));
  Tensor w3 = t.param(params, "cross.w3");
  Tensor pv = t.matmul_nt(xv, w3);  // [m_v, d]
  Tensor pw = t.matmul_nt(xw, w3);  // [m_w, d]

  CrossEncoding enc;
  enc.a_vw = cross_attention_matrix(t, pv, pw, cfg);
  enc.a_wv = cross_attention_matrix(t, pw, pv, cfg);

  Tensor w5 = t.param(params, "filter.w5");
  Tensor w4 = t.param(params, "filter.w4");
  // beta = sigmoid(mean over nodes of W4 tanh(W5 x_i))
  enc.beta_v = t.sigmoid(t.mean_pool_rows(t.matmul_nt(t.tanh_act(t.matmul_nt(xv, w5)), w4)));
  enc.beta_w = t.sigmoid(t.mean_pool_rows(t.matmul_nt(t.tanh_act(t.matmul_nt(xw, w5)), w4)));
  return enc;
}

std::pair<Tensor, Tensor> cross_distance(Tape& t, Tensor xv, Tensor xw,
                                         const CrossEncoding& enc) {
  Tensor dv = t.mul_rowvec(t.sub(t.matmul(enc.a_vw, xw), xv), enc.beta_v);
  Tensor dw = t.mul_rowvec(t.sub(t.matmul(enc.a_wv, xv), xw), enc.beta_w);
  return {t.hadamard(dv, dv), t.hadamard(dw, dw)};
}

Tensor pool_embed(Tape& t, Tensor l, const ParamStore& params,
                  const ModelConfig& cfg, bool training, RngStream* dropout_rng) {
  if (l.shape()[0] < 1) throw ShapeError("pool_embed: no rows to pool");
  Tensor w1 = t.param(params, "pool.w1");
  Tensor b1 = t.param(params, "pool.b1");
  Tensor w2 = t.param(params, "pool.w2");
  Tensor b2 = t.param(params, "pool.b2");
  Tensor h = t.relu(t.add_rowvec(t.matmul_nt(l, w1), b1));
  Tensor rows = t.add_rowvec(t.matmul_nt(h, w2), b2);  // [m, p]
  Tensor pooled = t.max_pool_rows(rows);
  if (training && cfg.dropout > 0.0) {
    if (!dropout_rng) throw DataError("pool_embed: training requires a dropout stream");
    pooled = t.dropout(pooled, cfg.dropout, *dropout_rng);
  }
  return t.relu(pooled);
}

Tensor classify_pair(Tape& t, Tensor r_vw, Tensor r_wv,
                     const ParamStore& params) {
  if (r_vw.shape() != r_wv.shape())
    throw ShapeError("classify_pair: length mismatch " + shape_str(r_vw.shape()) +
                     " vs " + shape_str(r_wv.shape()));
  Tensor cat = t.concat(r_vw, r_wv);
  Tensor h = t.relu(t.add(t.matvec(t.param(params, "cls.w1"), cat),
                          t.param(params, "cls.b1")));
  Tensor logit = t.add(t.matvec(t.param(params, "cls.w2"), h),
                       t.param(params, "cls.b2"));
  return t.sigmoid(logit);
}

Tensor forward_pair(Tape& t, const HierGraph& ga, const HierGraph& gb,
                    const ParamStore& params, const ModelConfig& cfg,
                    bool training, RngStream* dropout_rng) {
  EncodedDevice ev = encode_device(t, ga, params, cfg);
  EncodedDevice ew = encode_device(t, gb, params, cfg);
  if (cfg.head == ModelConfig::Head::ElementwiseMlp) {
    Tensor z = t.hadamard(t.mean_pool_rows(ev.x), t.mean_pool_rows(ew.x));
    Tensor h = t.relu(t.add(t.matvec(t.param(params, "abl.w1"), z),
                            t.param(params, "abl.b1")));
    Tensor logit = t.add(t.matvec(t.param(params, "abl.w2"), h),
                         t.param(params, "abl.b2"));
    return t.sigmoid(logit);
  }
  CrossEncoding enc = cross_encode(t, ev.x, ew.x, params, cfg);
  auto [l_vw, l_wv] = cross_distance(t, ev.x, ew.x, enc);
  Tensor r_vw = pool_embed(t, l_vw, params, cfg, training, dropout_rng);
  Tensor r_wv = pool_embed(t, l_wv, params, cfg, training, dropout_rng);
  return classify_pair(t, r_vw, r_wv, params);
}

double score_pair(const HierGraph& ga, const HierGraph& gb,
                  const ParamStore& params, const ModelConfig& cfg) {
  Tape t;
  return forward_pair(t, ga, gb, params, cfg, false, nullptr).scalar();
}

}  // namespace hgnn
