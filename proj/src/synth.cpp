#include "hgnn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "hgnn/log.hpp"
#include "hgnn/rng.hpp"

namespace hgnn {

void SynthConfig::validate() const {
  if (n_users < 1) throw DataError("n_users must be >= 1");
  if (devices_per_user < 1) throw DataError("devices_per_user must be >= 1");
  if (mean_log_len < 1) throw DataError("mean_log_len must be >= 1");
  if (profile_dim < 1) throw DataError("profile_dim must be >= 1");
  if (vocab_size < profile_dim)
    throw DataError("vocab_size " + std::to_string(vocab_size) +
                    " < profile_dim " + std::to_string(profile_dim));
  if (noise < 0.0 || noise > 1.0) throw DataError("noise must be in [0,1]");
}

namespace {

uint64_t user_seed(const SynthConfig& cfg, int user) {
  return substream(cfg.seed, "data", static_cast<uint64_t>(user));
}

// The user's favorite URLs with Zipf-like weights; the identity signal both
// of their devices share.
std::vector<int> favorites(const SynthConfig& cfg, int user) {
  RngStream rng(substream(user_seed(cfg, user), "favorites"));
  std::set<int> seen;
  std::vector<int> fav;
  while (static_cast<int>(fav.size()) < cfg.profile_dim) {
    int url = static_cast<int>(rng.below(static_cast<uint64_t>(cfg.vocab_size)));
    if (seen.insert(url).second) fav.push_back(url);
  }
  return fav;
}

int weighted_favorite(const std::vector<int>& fav, RngStream& rng) {
  // weight of rank k is 1/(k+1)
  double total = 0.0;
  for (size_t k = 0; k < fav.size(); ++k) total += 1.0 / static_cast<double>(k + 1);
  double r = rng.uniform() * total;
  for (size_t k = 0; k < fav.size(); ++k) {
    r -= 1.0 / static_cast<double>(k + 1);
    if (r <= 0.0) return fav[k];
  }
  return fav.back();
}

}  // namespace

KernelCandidates transition_kernel(const SynthConfig& cfg, int user,
                                   int current_url) {
  std::vector<int> fav = favorites(cfg, user);
  RngStream rng(substream(user_seed(cfg, user), "kernel",
                          static_cast<uint64_t>(current_url)));
  auto t = static_cast<uint64_t>(cfg.profile_dim);
  KernelCandidates k;
  k.next = {fav[rng.below(t)], fav[rng.below(t)], current_url, fav[rng.below(t)]};
  k.prob = {0.45, 0.25, 0.10, 0.20};
  return k;
}

namespace {

int kernel_step(const KernelCandidates& k, RngStream& rng) {
  double r = rng.uniform();
  for (size_t i = 0; i < k.next.size(); ++i) {
    r -= k.prob[i];
    if (r <= 0.0) return k.next[i];
  }
  return k.next.back();
}

int64_t draw_length(const SynthConfig& cfg, RngStream& rng) {
  double p = 1.0 / static_cast<double>(cfg.mean_log_len);
  double u = rng.uniform();
  auto len = static_cast<int64_t>(1.0 + std::floor(std::log1p(-u) / std::log1p(-p)));
  return std::clamp<int64_t>(len, 10, 5LL * cfg.mean_log_len);
}

}  // namespace

DeviceLog sample_device_log(const SynthConfig& cfg, int user, int device,
                            int exact_len) {
  cfg.validate();
  std::vector<int> fav = favorites(cfg, user);
  RngStream rng(substream(user_seed(cfg, user), "device",
                          static_cast<uint64_t>(device)));
  int64_t len = exact_len > 0 ? exact_len : draw_length(cfg, rng);

  DeviceLog log;
  log.device_id = "u" + std::to_string(user) + "_d" + std::to_string(device);
  log.events.reserve(static_cast<size_t>(len));
  int cur = weighted_favorite(fav, rng);
  int64_t ts = 1600000000 + static_cast<int64_t>(rng.below(86400));
  for (int64_t i = 0; i < len; ++i) {
    log.events.push_back({ts, {cur}});
    ts += 1 + static_cast<int64_t>(rng.below(3600));
    if (cfg.noise > 0.0 && rng.bernoulli(cfg.noise))
      cur = static_cast<int>(rng.below(static_cast<uint64_t>(cfg.vocab_size)));
    else
      cur = kernel_step(transition_kernel(cfg, user, cur), rng);
  }
  return log;
}

std::vector<PairExample> sample_pairs(const std::vector<DeviceLog>& logs,
                                      const std::vector<int>& user_of_log,
                                      double neg_ratio, uint64_t seed) {
  if (logs.size() != user_of_log.size())
    throw DataError("user_of_log size does not match logs");
  if (logs.size() < 2) throw DataError("need at least 2 devices to form pairs");
  if (neg_ratio < 0.0) throw DataError("neg_ratio must be >= 0");

  std::vector<PairExample> pairs;
  for (size_t i = 0; i < logs.size(); ++i)
    for (size_t j = i + 1; j < logs.size(); ++j)
      if (user_of_log[i] == user_of_log[j])
        pairs.push_back({logs[i].device_id, logs[j].device_id, 1});
  if (pairs.empty()) throw DataError("no positive pairs available");

  auto positives = static_cast<int64_t>(pairs.size());
  auto want = static_cast<int64_t>(std::ceil(neg_ratio * static_cast<double>(positives)));
  // count distinct cross-user pairs so a small corpus cannot loop forever
  int64_t cross = 0;
  for (size_t i = 0; i < logs.size(); ++i)
    for (size_t j = i + 1; j < logs.size(); ++j)
      if (user_of_log[i] != user_of_log[j]) ++cross;
  if (want > cross) {
    if (cross > 0)
      log::warn("only " + std::to_string(cross) + " cross-user pairs exist; " +
                "wanted " + std::to_string(want) + " negatives");
    want = cross;
  }

  RngStream rng(substream(seed, "negatives"));
  std::set<std::pair<size_t, size_t>> used;
  while (static_cast<int64_t>(used.size()) < want) {
    size_t i = rng.below(logs.size());
    size_t j = rng.below(logs.size());
    if (i == j || user_of_log[i] == user_of_log[j]) continue;
    auto key = std::minmax(i, j);
    if (used.insert({key.first, key.second}).second)
      pairs.push_back({logs[key.first].device_id, logs[key.second].device_id, 0});
  }
  return pairs;
}

SynthDataset generate_dataset(const SynthConfig& cfg, double neg_ratio) {
  cfg.validate();
  SynthDataset ds;
  ds.logs.reserve(static_cast<size_t>(cfg.n_users) * cfg.devices_per_user);
  for (int u = 0; u < cfg.n_users; ++u)
    for (int d = 0; d < cfg.devices_per_user; ++d) {
      ds.logs.push_back(sample_device_log(cfg, u, d));
      ds.user_of_log.push_back(u);
    }
  if (ds.logs.size() >= 2 && cfg.devices_per_user >= 2)
    ds.pairs = sample_pairs(ds.logs, ds.user_of_log, neg_ratio,
                            substream(cfg.seed, "pairs"));
  return ds;
}

}  // namespace hgnn
