#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "hgnn/graph.hpp"
#include "hgnn/model.hpp"
#include "hgnn/pairs.hpp"
#include "hgnn/param_store.hpp"
#include "hgnn/tensor.hpp"

namespace hgnn {

// Prebuilt hierarchical graphs for a set of device logs, addressable by id.
struct GraphSet {
  std::vector<std::string> ids;
  std::vector<HierGraph> graphs;
  std::unordered_map<std::string, int> index;

  static GraphSet build(const std::vector<DeviceLog>& logs, int K);
  const HierGraph& at(const std::string& device_id) const;
};

Tensor bce_loss(Tape& t, Tensor y_hat, int y);

struct OptimizerConfig {
  enum class Algo { Adam, Sgd };
  Algo algo = Algo::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 32;
  int epochs = 20;
};

struct TrainResult {
  std::vector<double> epoch_mean_loss;
  std::vector<double> val_best_f1;  // empty unless validation pairs given
};

// Mini-batch training on mean BCE. Pairs in a batch run forward/backward in
// parallel on private tapes; per-pair gradients are then summed in pair
// order, so results are bit-identical for any thread count. Deterministic
// per seed (shuffle and dropout streams both derive from it). Throws
// NumericError on a NaN loss.
TrainResult train(ParamStore& params, const GraphSet& graphs,
                  const std::vector<PairExample>& pairs,
                  const ModelConfig& cfg, const OptimizerConfig& opt,
                  uint64_t seed,
                  const std::vector<PairExample>* val_pairs = nullptr,
                  const GraphSet* val_graphs = nullptr);

// Inference scores for every pair (parallel, dropout off).
std::vector<double> score_pairs(const ParamStore& params,
                                const GraphSet& graphs,
                                const std::vector<PairExample>& pairs,
                                const ModelConfig& cfg);

struct EvalReport {
  struct Row {
    double threshold;
    double precision;
    double recall;
    double f1;
  };
  std::vector<Row> rows;  // thresholds 0.00 .. 1.00 step 0.01
  double best_f1 = 0.0;
  double best_threshold = 0.0;
  std::vector<std::pair<double, double>> pr_curve;  // (recall, precision)
};

// Precision/recall/F1 at 101 thresholds; a prediction is positive when
// score >= threshold. F1 = 0 when P + R = 0.
EvalReport evaluate_threshold_sweep(const std::vector<double>& scores,
                                    const std::vector<int>& labels);

EvalReport evaluate_threshold_sweep(const ParamStore& params,
                                    const GraphSet& graphs,
                                    const std::vector<PairExample>& pairs,
                                    const ModelConfig& cfg);

// Writes recall,precision (sorted by recall) and threshold,f1 CSVs.
void pr_curve_export(const EvalReport& report, const std::string& pr_path,
                     const std::string& f1_path);

// Full threshold,precision,recall,f1 table.
void eval_report_export(const EvalReport& report, const std::string& path);

void loss_history_export(const std::vector<double>& epoch_mean_loss,
                         const std::string& path);

}  // namespace hgnn
