#include "hgnn/graph.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "json.hpp"

#include "hgnn/rng.hpp"

namespace hgnn {

void DeviceLog::validate(const std::string& where) const {
  auto fail = [&](const std::string& msg) {
    throw DataError((where.empty() ? "device " + device_id : where) + ": " + msg);
  };
  if (events.empty()) fail("log has no events");
  int64_t prev = events.front().ts;
  for (size_t i = 0; i < events.size(); ++i) {
    if (events[i].tokens.empty())
      fail("event " + std::to_string(i) + " has an empty token list");
    if (events[i].ts < prev)
      fail("timestamps decrease at event " + std::to_string(i));
    prev = events[i].ts;
  }
}

int64_t HierGraph::membership_edge_count() const {
  int64_t n = 0;
  for (const auto& m : membership) n += static_cast<int64_t>(m.size());
  return n;
}

std::vector<std::vector<int>> HierGraph::out_neighbors() const {
  std::vector<std::vector<int>> out(fine_keys.size());
  for (auto [src, dst] : fine_edges) out[static_cast<size_t>(src)].push_back(dst);
  return out;
}

HierGraph build_fine_graph(const DeviceLog& log) {
  log.validate();
  HierGraph g;
  std::map<UrlKey, int> node_of;
  g.seq_fine_idx.reserve(log.events.size());
  for (const auto& ev : log.events) {
    auto [it, inserted] = node_of.try_emplace(ev.tokens, static_cast<int>(g.fine_keys.size()));
    if (inserted) {
      g.fine_keys.push_back(ev.tokens);
      g.in_neighbors.emplace_back();
    }
    g.seq_fine_idx.push_back(it->second);
  }
  std::set<std::pair<int, int>> seen;
  for (size_t p = 0; p + 1 < g.seq_fine_idx.size(); ++p) {
    int src = g.seq_fine_idx[p];
    int dst = g.seq_fine_idx[p + 1];  // src == dst is a self-loop, kept
    if (seen.insert({src, dst}).second) {
      g.fine_edges.emplace_back(src, dst);
      g.in_neighbors[static_cast<size_t>(dst)].push_back(src);
    }
  }
  return g;
}

void build_coarse_level(HierGraph& g, const DeviceLog& log, int K) {
  if (K < 1) throw DataError("K must be >= 1, got " + std::to_string(K));
  int64_t n = static_cast<int64_t>(log.events.size());
  if (n != g.seq_len())
    throw DataError("coarse level built against a different log");
  g.K = K;
  g.coarse_count = static_cast<int>((n + K - 1) / K);
  g.membership.assign(static_cast<size_t>(g.coarse_count), {});
  g.coarse_of.assign(g.fine_keys.size(), {});
  for (int j = 0; j < g.coarse_count; ++j) {
    int64_t lo = static_cast<int64_t>(j) * K;
    int64_t hi = std::min<int64_t>(lo + K, n);
    std::set<int> members;
    for (int64_t p = lo; p < hi; ++p) members.insert(g.seq_fine_idx[static_cast<size_t>(p)]);
    auto& mj = g.membership[static_cast<size_t>(j)];
    mj.assign(members.begin(), members.end());
    for (int f : mj) g.coarse_of[static_cast<size_t>(f)].push_back(j);
  }
}

HierGraph build_hier_graph(const DeviceLog& log, int K) {
  HierGraph g = build_fine_graph(log);
  build_coarse_level(g, log, K);
  return g;
}

ShortcutGraph build_shortcut_graph(const HierGraph& fine, int walk_length,
                                   int walks_per_node, uint64_t seed) {
  if (walk_length < 1)
    throw DataError("walk_length must be >= 1, got " + std::to_string(walk_length));
  if (fine.fine_keys.empty()) throw DataError("empty fine level");
  ShortcutGraph s;
  s.walk_length = walk_length;
  s.walks_per_node = walks_per_node;
  s.rng_seed = seed;
  auto out = fine.out_neighbors();
  std::set<std::pair<int, int>> edges;
  for (int start = 0; start < static_cast<int>(fine.fine_keys.size()); ++start) {
    for (int w = 0; w < walks_per_node; ++w) {
      RngStream rng(substream(seed, "walks", static_cast<uint64_t>(start),
                              static_cast<uint64_t>(w)));
      int cur = start;
      for (int step = 0; step < walk_length; ++step) {
        const auto& nbrs = out[static_cast<size_t>(cur)];
        if (nbrs.empty()) break;  // dead end terminates the walk
        cur = nbrs[rng.below(nbrs.size())];
        if (cur != start)
          edges.insert({std::min(start, cur), std::max(start, cur)});
      }
    }
  }
  s.edges.assign(edges.begin(), edges.end());
  return s;
}

StatsReport graph_stats(const HierGraph& g, const ShortcutGraph* s) {
  StatsReport r;
  r.seq_len = g.seq_len();
  r.fine_nodes = g.fine_count();
  r.fine_edges = static_cast<int64_t>(g.fine_edges.size());
  r.coarse_nodes = g.coarse_count;
  r.membership_edges = g.membership_edge_count();
  if (s) {
    r.has_shortcut = true;
    r.shortcut_edges = static_cast<int64_t>(s->edges.size());
    if (r.membership_edges > 0)
      r.shortcut_to_membership =
          static_cast<double>(r.shortcut_edges) / static_cast<double>(r.membership_edges);
  }
  return r;
}

// --- I/O -----------------------------------------------------------------------

std::vector<DeviceLog> load_logs(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open log file: " + path);
  std::vector<DeviceLog> logs;
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::string where = path + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    DeviceLog log;
    try {
      log.device_id = j.at("device_id").get<std::string>();
      for (const auto& ev : j.at("events")) {
        DeviceLog::Event e;
        e.ts = ev.at("ts").get<int64_t>();
        e.tokens = ev.at("tokens").get<UrlKey>();
        log.events.push_back(std::move(e));
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    log.validate(where);
    logs.push_back(std::move(log));
  }
  return logs;
}

void save_logs(const std::vector<DeviceLog>& logs, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write log file: " + path);
  for (const DeviceLog& log : logs) {
    nlohmann::ordered_json j;
    j["device_id"] = log.device_id;
    auto events = nlohmann::ordered_json::array();
    for (const auto& ev : log.events)
      events.push_back({{"ts", ev.ts}, {"tokens", ev.tokens}});
    j["events"] = std::move(events);
    os << j.dump() << "\n";
  }
  if (!os) throw DataError("short write to log file: " + path);
}

std::string graph_to_json(const HierGraph& g) {
  nlohmann::ordered_json j;
  j["fine_nodes"] = g.fine_keys;
  auto edges = nlohmann::ordered_json::array();
  for (auto [a, b] : g.fine_edges) edges.push_back({a, b});
  j["fine_edges"] = std::move(edges);
  j["in_neighbors"] = g.in_neighbors;
  j["seq_len"] = g.seq_len();
  j["K"] = g.K;
  j["coarse_count"] = g.coarse_count;
  j["membership"] = g.membership;
  j["coarse_of"] = g.coarse_of;
  return j.dump();
}

}  // namespace hgnn
