#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "hgnn/graph.hpp"
#include "hgnn/param_store.hpp"
#include "hgnn/tensor.hpp"

namespace hgnn {

struct ModelConfig {
  int K = 6;            // coarse-to-fine node ratio
  int d = 64;           // embedding / hidden dim
  int fine_rounds = 2;  // GRU message-passing rounds on the fine level
  int hetero_rounds = 1;
  double dropout = 0.2;
  int vocab_size = 0;
  uint64_t seed = 1;

  int pool_dim = 64;    // p: fixed comparison vector size
  int filter_dim = 64;  // hidden width of the feature-filtering attention

  // Cross-attention logit. Mean averages the two projected vectors down to
  // a scalar; ScaledDot is the usual (q.k)/sqrt(d).
  enum class CrossLogit { Mean, ScaledDot };
  CrossLogit cross_logit = CrossLogit::Mean;

  // Matching head. ElementwiseMlp replaces the cross-attention block with
  // an elementwise product of mean-pooled device embeddings (ablation).
  enum class Head { CrossAttention, ElementwiseMlp };
  Head head = Head::CrossAttention;

  void validate() const;
};

// Allocates and initializes every learnable array for the configuration:
// token embedding table, one GRU per fine round, per-round heterogeneous
// attention matrices, and the head parameters. Deterministic per seed.
ParamStore init_params(const ModelConfig& cfg);

// Fine node features from token embeddings: each node's feature is the mean
// of its URL's token embeddings. Returns X0 [m, d].
Tensor embed_nodes(Tape& t, const HierGraph& g, const ParamStore& params,
                   const ModelConfig& cfg);

// One fine-level round: per node, a GRU over the ordered in-neighbor
// features with the node's own feature appended last, then the mean of the
// old feature and the GRU output.
Tensor fine_message_round(Tape& t, const HierGraph& g, Tensor x,
                          const ParamStore& params, const ModelConfig& cfg,
                          int round);

// Coarse features: mean over members of W1*x_i. Returns [c, d].
Tensor coarse_update(Tape& t, const HierGraph& g, Tensor x,
                     const ParamStore& params, const ModelConfig& cfg,
                     int round);

// Heterogeneous attention update of fine features from coarse features:
// logits (W2 x_i).(W3 xc_j)/sqrt(d) over each node's coarse set, softmax,
// then mean of the node feature and the attention-weighted coarse sum.
Tensor fine_hetero_update(Tape& t, const HierGraph& g, Tensor x, Tensor xc,
                          const ParamStore& params, const ModelConfig& cfg,
                          int round);

struct EncodedDevice {
  Tensor x;  // [m, d] final fine-node embeddings
  int64_t m = 0;
};

// Full encoder: embeddings, fine_rounds fine rounds, then hetero_rounds of
// (coarse_update, fine_hetero_update).
EncodedDevice encode_device(Tape& t, const HierGraph& g,
                            const ParamStore& params, const ModelConfig& cfg);

struct CrossEncoding {
  Tensor a_vw;    // [m_v, m_w], rows sum to 1
  Tensor a_wv;    // [m_w, m_v]
  Tensor beta_v;  // [d], entries in (0,1)
  Tensor beta_w;  // [d]
};

CrossEncoding cross_encode(Tape& t, Tensor xv, Tensor xw,
                           const ParamStore& params, const ModelConfig& cfg);

// L_vw = [diag-gated (A_vw Xw - Xv)] squared elementwise, and symmetrically
// for L_wv. The beta gate scales feature columns.
std::pair<Tensor, Tensor> cross_distance(Tape& t, Tensor xv, Tensor xw,
                                         const CrossEncoding& enc);

// MLP along the feature dimension, max-pool over nodes, dropout (training
// only), ReLU. Output size pool_dim regardless of the node count.
Tensor pool_embed(Tape& t, Tensor l, const ParamStore& params,
                  const ModelConfig& cfg, bool training, RngStream* dropout_rng);

// sigmoid(MLP(r_vw || r_wv)).
Tensor classify_pair(Tape& t, Tensor r_vw, Tensor r_wv,
                     const ParamStore& params);

// Whole pairwise forward; returns the match probability node [1].
Tensor forward_pair(Tape& t, const HierGraph& ga, const HierGraph& gb,
                    const ParamStore& params, const ModelConfig& cfg,
                    bool training = false, RngStream* dropout_rng = nullptr);

// Inference-mode score on a fresh tape.
double score_pair(const HierGraph& ga, const HierGraph& gb,
                  const ParamStore& params, const ModelConfig& cfg);

}  // namespace hgnn
