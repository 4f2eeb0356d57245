// Benchmark: tape encoder vs serial reference, parallel vs single-thread
// pair scoring, and the hierarchical tier vs the random-walk shortcut tier.
#include <chrono>
#include <cstdio>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "hgnn/model.hpp"
#include "hgnn/reference.hpp"
#include "hgnn/rng.hpp"
#include "hgnn/synth.hpp"
#include "hgnn/training.hpp"

using namespace hgnn;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  int users = argc > 1 ? std::atoi(argv[1]) : 16;
  SynthConfig sc;
  sc.n_users = users;
  sc.seed = 7;
  SynthDataset ds = generate_dataset(sc);
  GraphSet graphs = GraphSet::build(ds.logs, 6);

  ModelConfig cfg;
  cfg.vocab_size = sc.vocab_size;
  cfg.seed = 1;
  ParamStore params = init_params(cfg);

  std::printf("corpus: %zu devices, %zu pairs, K=%d, d=%d\n", ds.logs.size(),
              ds.pairs.size(), cfg.K, cfg.d);

  // tape encoder vs serial reference encoder (same math, no tape)
  {
    auto t0 = std::chrono::steady_clock::now();
    for (const auto& g : graphs.graphs) {
      Tape t;
      encode_device(t, g, params, cfg);
    }
    double tape_s = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    for (const auto& g : graphs.graphs) ref::encode_device(g, params, cfg);
    double ref_s = seconds_since(t0);
    std::printf("encode %zu devices: tape %.3fs, serial reference %.3fs (x%.2f)\n",
                graphs.graphs.size(), tape_s, ref_s, tape_s / ref_s);
  }

  // pair scoring: 1 thread vs all threads
  {
#ifdef _OPENMP
    int max_threads = omp_get_max_threads();
    omp_set_num_threads(1);
#endif
    auto t0 = std::chrono::steady_clock::now();
    score_pairs(params, graphs, ds.pairs, cfg);
    double serial_s = seconds_since(t0);
#ifdef _OPENMP
    omp_set_num_threads(max_threads);
    t0 = std::chrono::steady_clock::now();
    score_pairs(params, graphs, ds.pairs, cfg);
    double parallel_s = seconds_since(t0);
    std::printf("score %zu pairs: 1 thread %.3fs, %d threads %.3fs (speedup x%.2f)\n",
                ds.pairs.size(), serial_s, max_threads, parallel_s,
                serial_s / parallel_s);
#else
    std::printf("score %zu pairs: %.3fs (OpenMP not available)\n",
                ds.pairs.size(), serial_s);
#endif
  }

  // hierarchy round vs shortcut-tier round (forward only, serial reference)
  {
    ModelConfig one_round = cfg;
    one_round.fine_rounds = 1;
    ParamStore p1 = init_params(one_round);
    double hier_s = 0.0, shortcut_s = 0.0;
    int64_t membership = 0, shortcut_edges = 0;
    for (size_t i = 0; i < graphs.graphs.size(); ++i) {
      const HierGraph& g = graphs.graphs[i];
      auto t0 = std::chrono::steady_clock::now();
      ref::encode_device(g, p1, one_round);
      hier_s += seconds_since(t0);

      ShortcutGraph s = build_shortcut_graph(g, 4, 1, substream(7, "walks", i));
      std::vector<std::vector<int>> nbrs(g.fine_count());
      for (auto [a, b] : g.fine_edges) nbrs[static_cast<size_t>(b)].push_back(a);
      for (auto [a, b] : s.edges) {
        nbrs[static_cast<size_t>(b)].push_back(a);
        nbrs[static_cast<size_t>(a)].push_back(b);
      }
      t0 = std::chrono::steady_clock::now();
      ref::Mat x = ref::embed_nodes(g, p1, one_round);
      x = ref::fine_message_round(g, x, p1, one_round, 0);
      ref::neighbor_round(nbrs, x, p1, one_round, 0);
      shortcut_s += seconds_since(t0);
      membership += g.membership_edge_count();
      shortcut_edges += static_cast<int64_t>(s.edges.size());
    }
    std::printf("second tier: hierarchy %.3fs (%lld membership edges), "
                "shortcut %.3fs (%lld shortcut edges), time ratio x%.2f\n",
                hier_s, static_cast<long long>(membership), shortcut_s,
                static_cast<long long>(shortcut_edges), shortcut_s / hier_s);
  }
  return 0;
}
