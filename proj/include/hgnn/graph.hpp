#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hgnn/errors.hpp"

namespace hgnn {

// A URL is identified by its token list; two visits are the same URL iff
// their token lists are equal.
using UrlKey = std::vector<int>;

// One device's time-ordered event sequence.
struct DeviceLog {
  struct Event {
    int64_t ts = 0;
    UrlKey tokens;
  };
  std::string device_id;
  std::vector<Event> events;

  // Throws DataError on empty logs, empty token lists, or decreasing
  // timestamps. `where` prefixes messages (e.g. "file:line").
  void validate(const std::string& where = "") const;
};

// Two-level heterogeneous graph built from one device log. Fine nodes are
// distinct URLs with directed transition edges; each coarse node covers K
// consecutive sequence positions and connects to the distinct fine nodes in
// its subgroup.
struct HierGraph {
  std::vector<UrlKey> fine_keys;               // node index, first-seen order
  std::vector<std::pair<int, int>> fine_edges; // directed, deduplicated
  std::vector<std::vector<int>> in_neighbors;  // ordered by first transition
  std::vector<int> seq_fine_idx;               // position -> fine node

  int K = 0;
  int coarse_count = 0;
  std::vector<std::vector<int>> membership;  // coarse -> sorted fine members
  std::vector<std::vector<int>> coarse_of;   // fine -> ascending coarse ids

  int64_t seq_len() const { return static_cast<int64_t>(seq_fine_idx.size()); }
  int64_t fine_count() const { return static_cast<int64_t>(fine_keys.size()); }
  int64_t membership_edge_count() const;
  std::vector<std::vector<int>> out_neighbors() const;
};

// Random-walk shortcut tier over the fine level, the baseline second-tier
// construction this build compares against.
struct ShortcutGraph {
  int walk_length = 0;
  int walks_per_node = 0;
  uint64_t rng_seed = 0;
  std::vector<std::pair<int, int>> edges;  // undirected, canonical (lo, hi)
};

// Fine level only (coarse fields left empty).
HierGraph build_fine_graph(const DeviceLog& log);

// Adds the coarse level onto a fine graph built from the same log.
void build_coarse_level(HierGraph& g, const DeviceLog& log, int K);

HierGraph build_hier_graph(const DeviceLog& log, int K);

// walks_per_node random walks of walk_length steps from every fine node,
// following outgoing edges uniformly; the start node is connected to every
// node the walk visits. Deterministic per seed.
ShortcutGraph build_shortcut_graph(const HierGraph& fine, int walk_length,
                                   int walks_per_node, uint64_t seed);

struct StatsReport {
  int64_t seq_len = 0;
  int64_t fine_nodes = 0;
  int64_t fine_edges = 0;
  int64_t coarse_nodes = 0;
  int64_t membership_edges = 0;
  int64_t shortcut_edges = 0;
  bool has_shortcut = false;
  // shortcut_edges / membership_edges; 0 when not applicable
  double shortcut_to_membership = 0.0;
};

StatsReport graph_stats(const HierGraph& g, const ShortcutGraph* s = nullptr);

// JSON-lines log I/O; one {"device_id":..., "events":[{"ts":..,"tokens":[..]}]}
// object per line. Parse failures carry the line number.
std::vector<DeviceLog> load_logs(const std::string& path);
void save_logs(const std::vector<DeviceLog>& logs, const std::string& path);

// Debug dump of the full graph structure.
std::string graph_to_json(const HierGraph& g);

}  // namespace hgnn
