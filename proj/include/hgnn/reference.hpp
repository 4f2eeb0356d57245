#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "hgnn/graph.hpp"
#include "hgnn/model.hpp"
#include "hgnn/param_store.hpp"

// Serial reference implementations of the model updates: per-node loops on
// plain arrays, no tape. They exist to pin down the semantics the tape path
// must reproduce (tests compare to < 1e-12) and as the single-threaded side
// of the benchmark.
namespace hgnn::ref {

struct Mat {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int64_t r, int64_t c) : rows(r), cols(c), a(static_cast<size_t>(r * c), 0.0) {}
  Mat(int64_t r, int64_t c, std::vector<double> values)
      : rows(r), cols(c), a(std::move(values)) {}
  double& at(int64_t i, int64_t j) { return a[static_cast<size_t>(i * cols + j)]; }
  double at(int64_t i, int64_t j) const { return a[static_cast<size_t>(i * cols + j)]; }
};

Mat embed_nodes(const HierGraph& g, const ParamStore& params,
                const ModelConfig& cfg);

Mat fine_message_round(const HierGraph& g, const Mat& x,
                       const ParamStore& params, const ModelConfig& cfg,
                       int round);

Mat coarse_update(const HierGraph& g, const Mat& x, const ParamStore& params,
                  const ModelConfig& cfg, int round);

Mat fine_hetero_update(const HierGraph& g, const Mat& x, const Mat& xc,
                       const ParamStore& params, const ModelConfig& cfg,
                       int round);

Mat encode_device(const HierGraph& g, const ParamStore& params,
                  const ModelConfig& cfg);

// Distance matrices given externally computed attention and gates.
std::pair<Mat, Mat> cross_distance(const Mat& xv, const Mat& xw,
                                   const Mat& a_vw, const Mat& a_wv,
                                   const std::vector<double>& beta_v,
                                   const std::vector<double>& beta_w);

// One message-passing round over an arbitrary neighbor structure, used to
// time the random-walk shortcut tier against the hierarchy.
Mat neighbor_round(const std::vector<std::vector<int>>& in_nbrs, const Mat& x,
                   const ParamStore& params, const ModelConfig& cfg, int round);

}  // namespace hgnn::ref
