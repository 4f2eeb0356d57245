#include "hgnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "hgnn/io.hpp"
#include "hgnn/log.hpp"
#include "hgnn/rng.hpp"

namespace hgnn {

GraphSet GraphSet::build(const std::vector<DeviceLog>& logs, int K) {
  GraphSet gs;
  gs.ids.resize(logs.size());
  gs.graphs.resize(logs.size());
  std::string error;
#pragma omp parallel for schedule(dynamic)
  for (size_t i = 0; i < logs.size(); ++i) {
    try {
      gs.ids[i] = logs[i].device_id;
      gs.graphs[i] = build_hier_graph(logs[i], K);
    } catch (const std::exception& e) {
#pragma omp critical
      error = e.what();
    }
  }
  if (!error.empty()) throw DataError(error);
  for (size_t i = 0; i < logs.size(); ++i) {
    if (!gs.index.emplace(gs.ids[i], static_cast<int>(i)).second)
      throw DataError("duplicate device id: " + gs.ids[i]);
  }
  return gs;
}

const HierGraph& GraphSet::at(const std::string& device_id) const {
  auto it = index.find(device_id);
  if (it == index.end()) throw DataError("unknown device id: " + device_id);
  return graphs[static_cast<size_t>(it->second)];
}

Tensor bce_loss(Tape& t, Tensor y_hat, int y) {
  if (y != 0 && y != 1) throw DataError("label must be 0 or 1");
  return t.bce(y_hat, static_cast<double>(y));
}

namespace {

class Optimizer {
public:
  Optimizer(const OptimizerConfig& cfg, const ParamStore& store) : cfg_(cfg) {
    if (cfg.algo == OptimizerConfig::Algo::Adam) {
      m_.resize(store.size());
      v_.resize(store.size());
      for (size_t p = 0; p < store.size(); ++p) {
        m_[p].assign(store.at(p).values.size(), 0.0);
        v_[p].assign(store.at(p).values.size(), 0.0);
      }
    }
  }

  void step(ParamStore& store, const std::vector<std::vector<double>>& grads) {
    ++t_;
    if (cfg_.algo == OptimizerConfig::Algo::Sgd) {
      for (size_t p = 0; p < store.size(); ++p) {
        auto& vals = store.at(p).values;
        for (size_t i = 0; i < vals.size(); ++i)
          vals[i] -= cfg_.lr * grads[p][i];
      }
      return;
    }
    double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (size_t p = 0; p < store.size(); ++p) {
      auto& vals = store.at(p).values;
      for (size_t i = 0; i < vals.size(); ++i) {
        double g = grads[p][i];
        m_[p][i] = cfg_.beta1 * m_[p][i] + (1.0 - cfg_.beta1) * g;
        v_[p][i] = cfg_.beta2 * v_[p][i] + (1.0 - cfg_.beta2) * g * g;
        double mh = m_[p][i] / bc1;
        double vh = v_[p][i] / bc2;
        vals[i] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
      }
    }
  }

private:
  OptimizerConfig cfg_;
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct ResolvedPair {
  const HierGraph* a;
  const HierGraph* b;
  int label;
};

std::vector<ResolvedPair> resolve_pairs(const GraphSet& graphs,
                                        const std::vector<PairExample>& pairs) {
  std::vector<ResolvedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs)
    out.push_back({&graphs.at(p.device_a), &graphs.at(p.device_b), p.label});
  return out;
}

}  // namespace

TrainResult train(ParamStore& params, const GraphSet& graphs,
                  const std::vector<PairExample>& pairs,
                  const ModelConfig& cfg, const OptimizerConfig& opt,
                  uint64_t seed, const std::vector<PairExample>* val_pairs,
                  const GraphSet* val_graphs) {
  if (pairs.empty()) throw DataError("training set is empty");
  if (!val_graphs) val_graphs = &graphs;
  auto resolved = resolve_pairs(graphs, pairs);

  bool has_pos = false, has_neg = false;
  for (const auto& p : pairs) (p.label ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg)
    log::warn("training set has a single class; proceeding anyway");

  Optimizer optimizer(opt, params);
  TrainResult result;
  size_t n = resolved.size();
  std::vector<size_t> order(n);
  std::vector<std::vector<std::vector<double>>> slot_grads(
      std::min<size_t>(n, static_cast<size_t>(opt.batch_size)));
  std::vector<double> slot_loss(slot_grads.size());

  // master gradient buffer, store-aligned
  std::vector<std::vector<double>> grads(params.size());
  for (size_t p = 0; p < params.size(); ++p)
    grads[p].resize(params.at(p).values.size());

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    for (size_t i = 0; i < n; ++i) order[i] = i;
    RngStream shuffle_rng(substream(seed, "shuffle", static_cast<uint64_t>(epoch)));
    for (size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double epoch_loss = 0.0;
    uint64_t pair_counter = 0;
    for (size_t start = 0; start < n; start += static_cast<size_t>(opt.batch_size)) {
      size_t bsz = std::min<size_t>(static_cast<size_t>(opt.batch_size), n - start);

      // forward/backward per pair on private tapes
      std::string batch_error;
#pragma omp parallel for schedule(dynamic)
      for (size_t k = 0; k < bsz; ++k) {
        try {
          const ResolvedPair& rp = resolved[order[start + k]];
          RngStream dropout_rng(substream(seed, "dropout",
                                          static_cast<uint64_t>(epoch),
                                          pair_counter + k));
          Tape tape;
          Tensor y_hat = forward_pair(tape, *rp.a, *rp.b, params, cfg,
                                      /*training=*/true, &dropout_rng);
          Tensor loss = tape.bce(y_hat, static_cast<double>(rp.label));
          tape.backward(loss);
          slot_loss[k] = loss.scalar();
          slot_grads[k] = tape.param_grads();
        } catch (const std::exception& e) {
#pragma omp critical
          batch_error = e.what();
        }
      }
      if (!batch_error.empty()) throw NumericError(batch_error);
      pair_counter += bsz;

      // fixed-order reduction keeps results independent of thread count
      for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0);
      for (size_t k = 0; k < bsz; ++k) {
        epoch_loss += slot_loss[k];
        for (size_t p = 0; p < grads.size(); ++p) {
          if (slot_grads[k][p].empty()) continue;
          for (size_t i = 0; i < grads[p].size(); ++i)
            grads[p][i] += slot_grads[k][p][i];
        }
      }
      double inv_b = 1.0 / static_cast<double>(bsz);
      for (auto& g : grads)
        for (double& v : g) v *= inv_b;
      optimizer.step(params, grads);
    }

    double mean_loss = epoch_loss / static_cast<double>(n);
    if (!std::isfinite(mean_loss))
      throw NumericError("mean loss is not finite at epoch " +
                         std::to_string(epoch));
    result.epoch_mean_loss.push_back(mean_loss);

    if (val_pairs && !val_pairs->empty()) {
      EvalReport report = evaluate_threshold_sweep(params, graphs, *val_pairs, cfg);
      result.val_best_f1.push_back(report.best_f1);
      log::info("epoch " + std::to_string(epoch) + ": loss " +
                format_double(mean_loss) + ", val F1 " +
                format_double(report.best_f1));
    } else {
      log::info("epoch " + std::to_string(epoch) + ": loss " +
                format_double(mean_loss));
    }
  }
  return result;
}

std::vector<double> score_pairs(const ParamStore& params,
                                const GraphSet& graphs,
                                const std::vector<PairExample>& pairs,
                                const ModelConfig& cfg) {
  auto resolved = resolve_pairs(graphs, pairs);
  std::vector<double> scores(resolved.size());
  std::string error;
#pragma omp parallel for schedule(dynamic)
  for (size_t i = 0; i < resolved.size(); ++i) {
    try {
      scores[i] = score_pair(*resolved[i].a, *resolved[i].b, params, cfg);
    } catch (const std::exception& e) {
#pragma omp critical
      error = e.what();
    }
  }
  if (!error.empty()) throw NumericError(error);
  return scores;
}

EvalReport evaluate_threshold_sweep(const std::vector<double>& scores,
                                    const std::vector<int>& labels) {
  if (scores.empty()) throw DataError("empty test set");
  if (scores.size() != labels.size())
    throw DataError("scores and labels differ in length");

  EvalReport report;
  report.rows.reserve(101);
  for (int t = 0; t <= 100; ++t) {
    double threshold = static_cast<double>(t) / 100.0;
    int64_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
      bool pred = scores[i] >= threshold;
      if (pred && labels[i] == 1) ++tp;
      else if (pred && labels[i] == 0) ++fp;
      else if (!pred && labels[i] == 1) ++fn;
    }
    double precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    double recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    double f1 = precision + recall > 0.0
                    ? 2.0 * precision * recall / (precision + recall)
                    : 0.0;
    report.rows.push_back({threshold, precision, recall, f1});
    if (f1 > report.best_f1) {
      report.best_f1 = f1;
      report.best_threshold = threshold;
    }
  }
  report.pr_curve.reserve(report.rows.size());
  for (const auto& r : report.rows) report.pr_curve.emplace_back(r.recall, r.precision);
  std::stable_sort(report.pr_curve.begin(), report.pr_curve.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  return report;
}

EvalReport evaluate_threshold_sweep(const ParamStore& params,
                                    const GraphSet& graphs,
                                    const std::vector<PairExample>& pairs,
                                    const ModelConfig& cfg) {
  std::vector<double> scores = score_pairs(params, graphs, pairs, cfg);
  std::vector<int> labels(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) labels[i] = pairs[i].label;
  return evaluate_threshold_sweep(scores, labels);
}

void pr_curve_export(const EvalReport& report, const std::string& pr_path,
                     const std::string& f1_path) {
  {
    std::ofstream os(pr_path);
    if (!os) throw DataError("cannot write: " + pr_path);
    os << "recall,precision\n";
    for (const auto& [recall, precision] : report.pr_curve)
      os << format_double(recall) << "," << format_double(precision) << "\n";
    if (!os) throw DataError("short write: " + pr_path);
  }
  {
    std::ofstream os(f1_path);
    if (!os) throw DataError("cannot write: " + f1_path);
    os << "threshold,f1\n";
    for (const auto& r : report.rows)
      os << format_double(r.threshold) << "," << format_double(r.f1) << "\n";
    if (!os) throw DataError("short write: " + f1_path);
  }
}

void eval_report_export(const EvalReport& report, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write: " + path);
  os << "threshold,precision,recall,f1\n";
  for (const auto& r : report.rows)
    os << format_double(r.threshold) << "," << format_double(r.precision)
       << "," << format_double(r.recall) << "," << format_double(r.f1) << "\n";
  if (!os) throw DataError("short write: " + path);
}

void loss_history_export(const std::vector<double>& epoch_mean_loss,
                         const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write: " + path);
  os << "epoch,mean_loss\n";
  for (size_t e = 0; e < epoch_mean_loss.size(); ++e)
    os << e << "," << format_double(epoch_mean_loss[e]) << "\n";
  if (!os) throw DataError("short write: " + path);
}

}  // namespace hgnn
