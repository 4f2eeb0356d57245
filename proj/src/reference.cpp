#include "hgnn/reference.hpp"

#include <cmath>
#include <string>

namespace hgnn::ref {

namespace {

// Mirrors the tape's evaluation order so results agree bit-for-bit.
double dot(const double* a, const double* b, int64_t n) {
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

const Param& gru_w(const ParamStore& p, int round, const char* name) {
  return p.at("fine" + std::to_string(round) + ".gru." + name);
}

const Param& het_w(const ParamStore& p, int round, const char* name) {
  return p.at("het" + std::to_string(round) + "." + name);
}

// One GRU cell on raw arrays; weights act on [x; h].
void gru_cell(const double* x, const double* h, double* out, int d,
              const ParamStore& params, int round) {
  const Param& wz = gru_w(params, round, "w_z");
  const Param& wr = gru_w(params, round, "w_r");
  const Param& wh = gru_w(params, round, "w_h");
  const Param& bz = gru_w(params, round, "b_z");
  const Param& br = gru_w(params, round, "b_r");
  const Param& bh = gru_w(params, round, "b_h");
  std::vector<double> xh(static_cast<size_t>(2 * d));
  for (int i = 0; i < d; ++i) xh[static_cast<size_t>(i)] = x[i];
  for (int i = 0; i < d; ++i) xh[static_cast<size_t>(d + i)] = h[i];
  std::vector<double> z(static_cast<size_t>(d)), r(static_cast<size_t>(d));
  for (int i = 0; i < d; ++i)
    z[static_cast<size_t>(i)] = sigmoid(dot(wz.values.data() + i * 2 * d, xh.data(), 2 * d) +
                                        bz.values[static_cast<size_t>(i)]);
  for (int i = 0; i < d; ++i)
    r[static_cast<size_t>(i)] = sigmoid(dot(wr.values.data() + i * 2 * d, xh.data(), 2 * d) +
                                        br.values[static_cast<size_t>(i)]);
  std::vector<double> xrh(static_cast<size_t>(2 * d));
  for (int i = 0; i < d; ++i) xrh[static_cast<size_t>(i)] = x[i];
  for (int i = 0; i < d; ++i)
    xrh[static_cast<size_t>(d + i)] = r[static_cast<size_t>(i)] * h[i];
  for (int i = 0; i < d; ++i) {
    double cand = std::tanh(dot(wh.values.data() + i * 2 * d, xrh.data(), 2 * d) +
                            bh.values[static_cast<size_t>(i)]);
    out[i] = h[i] + z[static_cast<size_t>(i)] * (cand - h[i]);
  }
}

}  // namespace

Mat embed_nodes(const HierGraph& g, const ParamStore& params,
                const ModelConfig& cfg) {
  const Param& table = params.at("embedding");
  Mat x(g.fine_count(), cfg.d);
  for (int64_t i = 0; i < g.fine_count(); ++i) {
    const UrlKey& key = g.fine_keys[static_cast<size_t>(i)];
    for (int tok : key)
      for (int j = 0; j < cfg.d; ++j)
        x.at(i, j) += table.values[static_cast<size_t>(tok) * cfg.d + static_cast<size_t>(j)];
    for (int j = 0; j < cfg.d; ++j) x.at(i, j) /= static_cast<double>(key.size());
  }
  return x;
}

Mat neighbor_round(const std::vector<std::vector<int>>& in_nbrs, const Mat& x,
                   const ParamStore& params, const ModelConfig& cfg, int round) {
  int d = cfg.d;
  Mat out(x.rows, x.cols);
  std::vector<double> h(static_cast<size_t>(d)), h2(static_cast<size_t>(d));
  for (int64_t i = 0; i < x.rows; ++i) {
    std::fill(h.begin(), h.end(), 0.0);
    for (int j : in_nbrs[static_cast<size_t>(i)]) {
      gru_cell(x.a.data() + j * d, h.data(), h2.data(), d, params, round);
      std::swap(h, h2);
    }
    gru_cell(x.a.data() + i * d, h.data(), h2.data(), d, params, round);
    for (int j = 0; j < d; ++j)
      out.at(i, j) = (x.at(i, j) + h2[static_cast<size_t>(j)]) * 0.5;
  }
  return out;
}

Mat fine_message_round(const HierGraph& g, const Mat& x,
                       const ParamStore& params, const ModelConfig& cfg,
                       int round) {
  return neighbor_round(g.in_neighbors, x, params, cfg, round);
}

Mat coarse_update(const HierGraph& g, const Mat& x, const ParamStore& params,
                  const ModelConfig& cfg, int round) {
  const Param& w1 = het_w(params, round, "w1");
  int d = cfg.d;
  Mat proj(x.rows, d);
  for (int64_t i = 0; i < x.rows; ++i)
    for (int j = 0; j < d; ++j)
      proj.at(i, j) = dot(x.a.data() + i * d, w1.values.data() + j * d, d);
  Mat xc(g.coarse_count, d);
  for (int64_t c = 0; c < g.coarse_count; ++c) {
    const auto& members = g.membership[static_cast<size_t>(c)];
    double inv = 1.0 / static_cast<double>(members.size());
    for (int f : members)
      for (int j = 0; j < d; ++j) xc.at(c, j) += inv * proj.at(f, j);
  }
  return xc;
}

Mat fine_hetero_update(const HierGraph& g, const Mat& x, const Mat& xc,
                       const ParamStore& params, const ModelConfig& cfg,
                       int round) {
  const Param& w2 = het_w(params, round, "w2");
  const Param& w3 = het_w(params, round, "w3");
  int d = cfg.d;
  Mat q(x.rows, d), k(xc.rows, d);
  for (int64_t i = 0; i < x.rows; ++i)
    for (int j = 0; j < d; ++j)
      q.at(i, j) = dot(x.a.data() + i * d, w2.values.data() + j * d, d);
  for (int64_t i = 0; i < xc.rows; ++i)
    for (int j = 0; j < d; ++j)
      k.at(i, j) = dot(xc.a.data() + i * d, w3.values.data() + j * d, d);
  double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  Mat out(x.rows, d);
  std::vector<double> alpha;
  for (int64_t i = 0; i < x.rows; ++i) {
    const auto& coarse = g.coarse_of[static_cast<size_t>(i)];
    alpha.assign(coarse.size(), 0.0);
    double mx = -HUGE_VAL;
    for (size_t ci = 0; ci < coarse.size(); ++ci) {
      double e = dot(q.a.data() + i * d, k.a.data() + coarse[ci] * d, d) * inv_sqrt_d;
      alpha[ci] = e;
      mx = std::max(mx, e);
    }
    double sum = 0.0;
    for (double& e : alpha) {
      e = std::exp(e - mx);
      sum += e;
    }
    for (double& e : alpha) e /= sum;
    for (size_t ci = 0; ci < coarse.size(); ++ci)
      for (int j = 0; j < d; ++j)
        out.at(i, j) += alpha[ci] * xc.at(coarse[ci], j);
    for (int j = 0; j < d; ++j) out.at(i, j) = (x.at(i, j) + out.at(i, j)) * 0.5;
  }
  return out;
}

Mat encode_device(const HierGraph& g, const ParamStore& params,
                  const ModelConfig& cfg) {
  Mat x = embed_nodes(g, params, cfg);
  for (int r = 0; r < cfg.fine_rounds; ++r)
    x = fine_message_round(g, x, params, cfg, r);
  for (int r = 0; r < cfg.hetero_rounds; ++r) {
    Mat xc = coarse_update(g, x, params, cfg, r);
    x = fine_hetero_update(g, x, xc, params, cfg, r);
  }
  return x;
}

std::pair<Mat, Mat> cross_distance(const Mat& xv, const Mat& xw,
                                   const Mat& a_vw, const Mat& a_wv,
                                   const std::vector<double>& beta_v,
                                   const std::vector<double>& beta_w) {
  auto one_side = [](const Mat& a, const Mat& xo, const Mat& xs,
                     const std::vector<double>& beta) {
    Mat l(xs.rows, xs.cols);
    for (int64_t i = 0; i < xs.rows; ++i)
      for (int64_t j = 0; j < xs.cols; ++j) {
        double s = 0.0;
        for (int64_t t = 0; t < a.cols; ++t) s += a.at(i, t) * xo.at(t, j);
        double dv = (s - xs.at(i, j)) * beta[static_cast<size_t>(j)];
        l.at(i, j) = dv * dv;
      }
    return l;
  };
  return {one_side(a_vw, xw, xv, beta_v), one_side(a_wv, xv, xw, beta_w)};
}

}  // namespace hgnn::ref
