#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "json.hpp"

#include "hgnn/checkpoint.hpp"
#include "hgnn/errors.hpp"
#include "hgnn/graph.hpp"
#include "hgnn/io.hpp"
#include "hgnn/log.hpp"
#include "hgnn/model.hpp"
#include "hgnn/pairs.hpp"
#include "hgnn/reference.hpp"
#include "hgnn/rng.hpp"
#include "hgnn/synth.hpp"
#include "hgnn/training.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Every tunable of every subcommand; resolved as defaults < config file <
// explicit flags, then snapshotted into the output directory.
struct RunConfig {
  uint64_t seed = 1;
  std::string out = "runs/out";
  int threads = 0;  // 0 keeps the OpenMP default

  // model
  int K = 6;
  int dim = 64;
  int fine_rounds = 2;
  int hetero_rounds = 1;
  int pool_dim = 64;
  int filter_dim = 64;
  double dropout = 0.2;
  int vocab = 0;  // 0 = derive from the logs
  std::string head = "cross";        // cross | elementwise
  std::string cross_logit = "mean";  // mean | dot

  // training
  double lr = 1e-3;
  int batch = 32;
  int epochs = 20;
  std::string optimizer = "adam";  // adam | sgd

  // synthetic data
  int users = 100;
  int devices_per_user = 2;
  int mean_len = 197;
  int profile_dim = 12;
  double noise = 0.35;
  double neg_ratio = 1.0;
  double test_fraction = 0.1;

  // shortcut tier
  int walk_len = 4;
  int walks_per_node = 1;
};

#define RUN_CONFIG_FIELDS(X)                                                   \
  X(seed) X(out) X(threads) X(K) X(dim) X(fine_rounds) X(hetero_rounds)       \
  X(pool_dim) X(filter_dim) X(dropout) X(vocab) X(head) X(cross_logit) X(lr) \
  X(batch) X(epochs) X(optimizer) X(users) X(devices_per_user) X(mean_len)   \
  X(profile_dim) X(noise) X(neg_ratio) X(test_fraction) X(walk_len)          \
  X(walks_per_node)

ordered_json config_to_json(const RunConfig& c) {
  ordered_json j;
#define X(field) j[#field] = c.field;
  RUN_CONFIG_FIELDS(X)
#undef X
  return j;
}

void apply_json(RunConfig& c, const ordered_json& j) {
#define X(field)                                                               \
  if (j.contains(#field)) j.at(#field).get_to(c.field);
  RUN_CONFIG_FIELDS(X)
#undef X
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const std::set<std::string> known = [] {
      std::set<std::string> k;
#define X(field) k.insert(#field);
      RUN_CONFIG_FIELDS(X)
#undef X
      return k;
    }();
    if (!known.count(it.key()))
      hgnn::log::warn("config file: unknown key '" + it.key() + "' ignored");
  }
}

hgnn::ModelConfig model_config(const RunConfig& c, int vocab) {
  hgnn::ModelConfig cfg;
  cfg.K = c.K;
  cfg.d = c.dim;
  cfg.fine_rounds = c.fine_rounds;
  cfg.hetero_rounds = c.hetero_rounds;
  cfg.dropout = c.dropout;
  cfg.vocab_size = vocab;
  cfg.seed = c.seed;
  cfg.pool_dim = c.pool_dim;
  cfg.filter_dim = c.filter_dim;
  if (c.cross_logit == "dot")
    cfg.cross_logit = hgnn::ModelConfig::CrossLogit::ScaledDot;
  else if (c.cross_logit != "mean")
    throw hgnn::DataError("cross_logit must be 'mean' or 'dot'");
  if (c.head == "elementwise")
    cfg.head = hgnn::ModelConfig::Head::ElementwiseMlp;
  else if (c.head != "cross")
    throw hgnn::DataError("head must be 'cross' or 'elementwise'");
  return cfg;
}

hgnn::OptimizerConfig optimizer_config(const RunConfig& c) {
  hgnn::OptimizerConfig opt;
  if (c.optimizer == "sgd")
    opt.algo = hgnn::OptimizerConfig::Algo::Sgd;
  else if (c.optimizer != "adam")
    throw hgnn::DataError("optimizer must be 'adam' or 'sgd'");
  opt.lr = c.lr;
  opt.batch_size = c.batch;
  opt.epochs = c.epochs;
  return opt;
}

void prepare_out(const RunConfig& c) {
  fs::create_directories(c.out);
#ifdef _OPENMP
  if (c.threads > 0) omp_set_num_threads(c.threads);
#endif
  hgnn::write_file(c.out + "/config_resolved.json",
                   config_to_json(c).dump(2) + "\n");
}

int derive_vocab(const std::vector<hgnn::DeviceLog>& logs) {
  int max_token = -1;
  for (const auto& log : logs)
    for (const auto& ev : log.events)
      for (int tok : ev.tokens) max_token = std::max(max_token, tok);
  if (max_token < 0) throw hgnn::DataError("no tokens in any log");
  return max_token + 1;
}

// Model structure is recoverable from a checkpoint's parameter names and
// shapes; only graph-side settings (K) still come from the run config.
hgnn::ModelConfig config_from_checkpoint(const hgnn::ParamStore& params,
                                         const RunConfig& c) {
  hgnn::ModelConfig cfg = model_config(c, 1);
  const hgnn::Param& emb = params.at("embedding");
  cfg.vocab_size = static_cast<int>(emb.shape[0]);
  cfg.d = static_cast<int>(emb.shape[1]);
  int fine = 0;
  while (params.contains("fine" + std::to_string(fine) + ".gru.w_z")) ++fine;
  int het = 0;
  while (params.contains("het" + std::to_string(het) + ".w1")) ++het;
  cfg.fine_rounds = fine;
  cfg.hetero_rounds = het;
  if (params.contains("abl.w1")) {
    cfg.head = hgnn::ModelConfig::Head::ElementwiseMlp;
    cfg.pool_dim = static_cast<int>(params.at("abl.w1").shape[0]);
  } else {
    cfg.head = hgnn::ModelConfig::Head::CrossAttention;
    cfg.pool_dim = static_cast<int>(params.at("pool.w1").shape[0]);
    cfg.filter_dim = static_cast<int>(params.at("filter.w5").shape[0]);
  }
  return cfg;
}

// --- subcommands -------------------------------------------------------------

void run_gen_data(const RunConfig& c) {
  prepare_out(c);
  hgnn::SynthConfig sc;
  sc.n_users = c.users;
  sc.devices_per_user = c.devices_per_user;
  sc.mean_log_len = c.mean_len;
  sc.vocab_size = c.vocab > 0 ? c.vocab : 600;
  sc.profile_dim = c.profile_dim;
  sc.noise = c.noise;
  sc.seed = c.seed;
  hgnn::SynthDataset ds = hgnn::generate_dataset(sc, c.neg_ratio);
  hgnn::save_logs(ds.logs, c.out + "/logs.jsonl");
  hgnn::save_pairs(ds.pairs, c.out + "/pairs.csv");

  // user-disjoint train/test split; negatives resampled inside each side
  int test_users = std::max(1, static_cast<int>(c.users * c.test_fraction));
  int train_users = c.users - test_users;
  if (train_users < 1) throw hgnn::DataError("test_fraction leaves no training users");
  std::vector<hgnn::DeviceLog> train_logs, test_logs;
  std::vector<int> train_user_of, test_user_of;
  for (size_t i = 0; i < ds.logs.size(); ++i) {
    if (ds.user_of_log[i] < train_users) {
      train_logs.push_back(ds.logs[i]);
      train_user_of.push_back(ds.user_of_log[i]);
    } else {
      test_logs.push_back(ds.logs[i]);
      test_user_of.push_back(ds.user_of_log[i]);
    }
  }
  auto train_pairs = hgnn::sample_pairs(train_logs, train_user_of, c.neg_ratio,
                                        hgnn::substream(c.seed, "pairs.train"));
  auto test_pairs = hgnn::sample_pairs(test_logs, test_user_of, c.neg_ratio,
                                       hgnn::substream(c.seed, "pairs.test"));
  hgnn::save_pairs(train_pairs, c.out + "/train_pairs.csv");
  hgnn::save_pairs(test_pairs, c.out + "/test_pairs.csv");
  std::cout << "wrote " << ds.logs.size() << " logs, " << ds.pairs.size()
            << " pairs (" << train_pairs.size() << " train / "
            << test_pairs.size() << " test) to " << c.out << "\n";
}

void write_stats_csv(const std::vector<std::string>& ids,
                     const std::vector<hgnn::StatsReport>& stats,
                     const std::string& path, bool with_shortcut) {
  std::ofstream os(path);
  if (!os) throw hgnn::DataError("cannot write: " + path);
  os << "device_id,seq_len,fine_nodes,fine_edges,coarse_nodes,membership_edges";
  if (with_shortcut) os << ",shortcut_edges,shortcut_to_membership";
  os << "\n";
  for (size_t i = 0; i < stats.size(); ++i) {
    const auto& s = stats[i];
    os << ids[i] << "," << s.seq_len << "," << s.fine_nodes << ","
       << s.fine_edges << "," << s.coarse_nodes << "," << s.membership_edges;
    if (with_shortcut)
      os << "," << s.shortcut_edges << ","
         << hgnn::format_double(s.shortcut_to_membership);
    os << "\n";
  }
}

void run_build_graph(const RunConfig& c, const std::string& logs_path) {
  prepare_out(c);
  auto logs = hgnn::load_logs(logs_path);
  if (logs.empty()) throw hgnn::DataError("no logs in " + logs_path);
  hgnn::GraphSet graphs = hgnn::GraphSet::build(logs, c.K);
  std::ofstream os(c.out + "/graphs.jsonl");
  std::vector<hgnn::StatsReport> stats;
  for (size_t i = 0; i < graphs.graphs.size(); ++i) {
    ordered_json j;
    j["device_id"] = graphs.ids[i];
    j["graph"] = ordered_json::parse(hgnn::graph_to_json(graphs.graphs[i]));
    os << j.dump() << "\n";
    stats.push_back(hgnn::graph_stats(graphs.graphs[i]));
  }
  write_stats_csv(graphs.ids, stats, c.out + "/graph_stats.csv", false);
  std::cout << "built " << graphs.graphs.size() << " graphs (K=" << c.K
            << ") into " << c.out << "\n";
}

void run_train(const RunConfig& c, const std::string& logs_path,
               const std::string& pairs_path, const std::string& val_path) {
  prepare_out(c);
  auto logs = hgnn::load_logs(logs_path);
  auto pairs = hgnn::load_pairs(pairs_path);
  int vocab = c.vocab > 0 ? c.vocab : derive_vocab(logs);
  hgnn::ModelConfig cfg = model_config(c, vocab);
  hgnn::GraphSet graphs = hgnn::GraphSet::build(logs, cfg.K);
  hgnn::ParamStore params = hgnn::init_params(cfg);

  std::vector<hgnn::PairExample> val_pairs;
  if (!val_path.empty()) val_pairs = hgnn::load_pairs(val_path);

  hgnn::TrainResult result =
      hgnn::train(params, graphs, pairs, cfg, optimizer_config(c), c.seed,
                  val_pairs.empty() ? nullptr : &val_pairs);

  hgnn::save_checkpoint(params, c.out + "/checkpoint.hgnn");
  hgnn::loss_history_export(result.epoch_mean_loss, c.out + "/loss_history.csv");
  if (!result.val_best_f1.empty()) {
    std::ofstream os(c.out + "/val_history.csv");
    os << "epoch,best_f1\n";
    for (size_t e = 0; e < result.val_best_f1.size(); ++e)
      os << e << "," << hgnn::format_double(result.val_best_f1[e]) << "\n";
  }
  std::cout << "trained " << c.epochs << " epochs; final loss "
            << hgnn::format_double(result.epoch_mean_loss.back())
            << "; checkpoint at " << c.out << "/checkpoint.hgnn\n";
}

void run_eval(const RunConfig& c, const std::string& logs_path,
              const std::string& pairs_path, const std::string& ckpt_path) {
  prepare_out(c);
  hgnn::ParamStore params = hgnn::load_checkpoint(ckpt_path);
  hgnn::ModelConfig cfg = config_from_checkpoint(params, c);
  auto logs = hgnn::load_logs(logs_path);
  auto pairs = hgnn::load_pairs(pairs_path);
  hgnn::GraphSet graphs = hgnn::GraphSet::build(logs, cfg.K);
  hgnn::EvalReport report =
      hgnn::evaluate_threshold_sweep(params, graphs, pairs, cfg);
  hgnn::eval_report_export(report, c.out + "/metrics.csv");
  hgnn::pr_curve_export(report, c.out + "/pr_curve.csv",
                        c.out + "/f1_by_threshold.csv");
  std::cout << "best F1 " << hgnn::format_double(report.best_f1)
            << " at threshold " << hgnn::format_double(report.best_threshold)
            << " over " << pairs.size() << " pairs\n";
}

void run_score_pairs(const RunConfig& c, const std::string& logs_path,
                     const std::string& pairs_path, const std::string& ckpt_path) {
  prepare_out(c);
  hgnn::ParamStore params = hgnn::load_checkpoint(ckpt_path);
  hgnn::ModelConfig cfg = config_from_checkpoint(params, c);
  auto logs = hgnn::load_logs(logs_path);
  auto pairs = hgnn::load_pairs(pairs_path);
  hgnn::GraphSet graphs = hgnn::GraphSet::build(logs, cfg.K);
  std::vector<double> scores = hgnn::score_pairs(params, graphs, pairs, cfg);
  hgnn::save_scores(pairs, scores, c.out + "/scores.csv");
  std::cout << "scored " << pairs.size() << " pairs into " << c.out
            << "/scores.csv\n";
}

void run_compare_tiers(const RunConfig& c, const std::string& logs_path) {
  prepare_out(c);
  std::vector<hgnn::DeviceLog> logs;
  if (!logs_path.empty()) {
    logs = hgnn::load_logs(logs_path);
  } else {
    hgnn::SynthConfig sc;
    sc.n_users = std::max(1, c.users / c.devices_per_user);
    sc.devices_per_user = c.devices_per_user;
    sc.mean_log_len = c.mean_len;
    sc.vocab_size = c.vocab > 0 ? c.vocab : 600;
    sc.profile_dim = c.profile_dim;
    sc.noise = c.noise;
    sc.seed = c.seed;
    for (int u = 0; u < sc.n_users; ++u)
      for (int d = 0; d < sc.devices_per_user; ++d)
        logs.push_back(hgnn::sample_device_log(sc, u, d, c.mean_len));
  }
  if (logs.empty()) throw hgnn::DataError("no logs to compare");

  std::vector<hgnn::StatsReport> stats(logs.size());
  std::vector<std::string> ids(logs.size());
  std::vector<hgnn::HierGraph> graphs(logs.size());
  for (size_t i = 0; i < logs.size(); ++i) {
    ids[i] = logs[i].device_id;
    graphs[i] = hgnn::build_hier_graph(logs[i], c.K);
    hgnn::ShortcutGraph shortcut = hgnn::build_shortcut_graph(
        graphs[i], c.walk_len, c.walks_per_node,
        hgnn::substream(c.seed, "walks", i));
    stats[i] = hgnn::graph_stats(graphs[i], &shortcut);
  }
  write_stats_csv(ids, stats, c.out + "/tier_stats.csv", true);

  double ratio_sum = 0.0;
  int64_t membership_total = 0, shortcut_total = 0;
  for (const auto& s : stats) {
    ratio_sum += s.shortcut_to_membership;
    membership_total += s.membership_edges;
    shortcut_total += s.shortcut_edges;
  }
  double mean_ratio = ratio_sum / static_cast<double>(stats.size());

  // forward-pass timing: hierarchy vs one round over the shortcut edges
  hgnn::ModelConfig cfg = model_config(c, c.vocab > 0 ? c.vocab : 600);
  cfg.fine_rounds = 1;
  hgnn::ParamStore params = hgnn::init_params(cfg);
  size_t sample = std::min<size_t>(logs.size(), 25);
  auto t0 = std::chrono::steady_clock::now();
  for (size_t i = 0; i < sample; ++i)
    hgnn::ref::encode_device(graphs[i], params, cfg);
  auto t1 = std::chrono::steady_clock::now();
  for (size_t i = 0; i < sample; ++i) {
    hgnn::ShortcutGraph shortcut = hgnn::build_shortcut_graph(
        graphs[i], c.walk_len, c.walks_per_node,
        hgnn::substream(c.seed, "walks", i));
    std::vector<std::vector<int>> nbrs(graphs[i].fine_count());
    for (auto [a, b] : graphs[i].fine_edges) nbrs[static_cast<size_t>(b)].push_back(a);
    for (auto [a, b] : shortcut.edges) {
      nbrs[static_cast<size_t>(b)].push_back(a);
      nbrs[static_cast<size_t>(a)].push_back(b);
    }
    hgnn::ref::Mat x = hgnn::ref::embed_nodes(graphs[i], params, cfg);
    x = hgnn::ref::fine_message_round(graphs[i], x, params, cfg, 0);
    hgnn::ref::neighbor_round(nbrs, x, params, cfg, 0);
  }
  auto t2 = std::chrono::steady_clock::now();
  double hier_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  double shortcut_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();

  ordered_json summary;
  summary["devices"] = logs.size();
  summary["K"] = c.K;
  summary["walk_length"] = c.walk_len;
  summary["walks_per_node"] = c.walks_per_node;
  summary["membership_edges_total"] = membership_total;
  summary["shortcut_edges_total"] = shortcut_total;
  summary["mean_shortcut_to_membership"] = mean_ratio;
  summary["hier_forward_ms"] = hier_ms;
  summary["shortcut_forward_ms"] = shortcut_ms;
  summary["forward_time_ratio"] = hier_ms > 0 ? shortcut_ms / hier_ms : 0.0;
  hgnn::write_file(c.out + "/tiers_summary.json", summary.dump(2) + "\n");
  std::cout << "mean shortcut/membership edge ratio "
            << hgnn::format_double(mean_ratio) << "; forward time ratio "
            << hgnn::format_double(hier_ms > 0 ? shortcut_ms / hier_ms : 0.0)
            << " (shortcut/hier, " << sample << " devices)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical graph neural network for cross-device user matching"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path, logs_path, pairs_path, val_path, ckpt_path;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--out", cfg.out, "output directory");
    cmd->add_option("--seed", cfg.seed, "root RNG seed");
    cmd->add_option("--threads", cfg.threads, "OpenMP thread count (0 = default)");
    cmd->add_option("--K", cfg.K, "coarse subgroup size");
    cmd->add_option("--dim", cfg.dim, "embedding dimension");
    cmd->add_option("--fine-rounds", cfg.fine_rounds, "fine message-passing rounds");
    cmd->add_option("--hetero-rounds", cfg.hetero_rounds, "heterogeneous rounds");
    cmd->add_option("--pool-dim", cfg.pool_dim, "pooled comparison size");
    cmd->add_option("--filter-dim", cfg.filter_dim, "feature filter width");
    cmd->add_option("--dropout", cfg.dropout, "dropout rate");
    cmd->add_option("--vocab", cfg.vocab, "vocabulary size (0 = derive)");
    cmd->add_option("--head", cfg.head, "matching head: cross | elementwise");
    cmd->add_option("--cross-logit", cfg.cross_logit, "cross logit: mean | dot");
    cmd->add_option("--lr", cfg.lr, "learning rate");
    cmd->add_option("--batch", cfg.batch, "batch size in pairs");
    cmd->add_option("--epochs", cfg.epochs, "training epochs");
    cmd->add_option("--optimizer", cfg.optimizer, "adam | sgd");
    cmd->add_option("--users", cfg.users, "synthetic users");
    cmd->add_option("--devices-per-user", cfg.devices_per_user, "devices per user");
    cmd->add_option("--mean-len", cfg.mean_len, "mean log length");
    cmd->add_option("--profile-dim", cfg.profile_dim, "favorites per user");
    cmd->add_option("--noise", cfg.noise, "cross-device divergence in [0,1]");
    cmd->add_option("--neg-ratio", cfg.neg_ratio, "negatives per positive");
    cmd->add_option("--test-fraction", cfg.test_fraction, "held-out user fraction");
    cmd->add_option("--walk-len", cfg.walk_len, "random walk length");
    cmd->add_option("--walks-per-node", cfg.walks_per_node, "walks per node");
    return cmd;
  };

  CLI::App* gen = add_common(app.add_subcommand("gen-data", "generate a synthetic corpus"));
  CLI::App* build = add_common(app.add_subcommand("build-graph", "build and dump hierarchical graphs"));
  build->add_option("--logs", logs_path, "JSON-lines device logs")->required();
  CLI::App* tr = add_common(app.add_subcommand("train", "train the matcher"));
  tr->add_option("--logs", logs_path, "JSON-lines device logs")->required();
  tr->add_option("--pairs", pairs_path, "training pair CSV")->required();
  tr->add_option("--val-pairs", val_path, "validation pair CSV (per-epoch F1)");
  CLI::App* ev = add_common(app.add_subcommand("eval", "threshold-sweep evaluation"));
  ev->add_option("--logs", logs_path, "JSON-lines device logs")->required();
  ev->add_option("--pairs", pairs_path, "test pair CSV")->required();
  ev->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
  CLI::App* sc = add_common(app.add_subcommand("score-pairs", "score pairs with a checkpoint"));
  sc->add_option("--logs", logs_path, "JSON-lines device logs")->required();
  sc->add_option("--pairs", pairs_path, "pair CSV")->required();
  sc->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
  CLI::App* ct = add_common(app.add_subcommand("compare-tiers",
      "hierarchy vs random-walk tier structural comparison"));
  ct->add_option("--logs", logs_path, "JSON-lines device logs (default: synthesize)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);  // prints usage to stderr
    return code == 0 ? 0 : 1;
  }

  CLI::App* active = app.get_subcommands().front();

  try {
    // precedence: defaults < config file < explicit flags
    if (!config_path.empty()) {
      ordered_json file_json;
      try {
        file_json = ordered_json::parse(hgnn::read_file(config_path));
      } catch (const nlohmann::json::exception& e) {
        throw hgnn::DataError(config_path + ": " + e.what());
      }
      RunConfig flags_applied = cfg;  // snapshot with flag values in place
      RunConfig merged;               // defaults
      apply_json(merged, file_json);
      auto dashify = [](std::string s) {
        for (char& ch : s)
          if (ch == '_') ch = '-';
        return "--" + s;
      };
#define X(field)                                                               \
  if (active->count(dashify(#field)) > 0) {                                   \
    if (file_json.contains(#field) && merged.field != flags_applied.field)    \
      hgnn::log::warn(std::string("flag overrides config file for '") +       \
                      #field + "'");                                          \
    merged.field = flags_applied.field;                                       \
  }
      RUN_CONFIG_FIELDS(X)
#undef X
      cfg = merged;
    }

    if (active == gen) run_gen_data(cfg);
    else if (active == build) run_build_graph(cfg, logs_path);
    else if (active == tr) run_train(cfg, logs_path, pairs_path, val_path);
    else if (active == ev) run_eval(cfg, logs_path, pairs_path, ckpt_path);
    else if (active == sc) run_score_pairs(cfg, logs_path, pairs_path, ckpt_path);
    else if (active == ct) run_compare_tiers(cfg, logs_path);
  } catch (const hgnn::NumericError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
