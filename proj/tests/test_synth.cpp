#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>
#include <unordered_map>
#include <unordered_set>

#include "hgnn/graph.hpp"
#include "hgnn/synth.hpp"
#include "hgnn/training.hpp"

using namespace hgnn;

namespace {

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.n_users = 8;
  cfg.devices_per_user = 2;
  cfg.mean_log_len = 40;
  cfg.vocab_size = 100;
  cfg.profile_dim = 6;
  cfg.noise = 0.2;
  cfg.seed = 11;
  return cfg;
}

int user_of(const std::string& device_id) {
  // ids look like u<user>_d<device>
  return std::stoi(device_id.substr(1, device_id.find('_') - 1));
}

}  // namespace

TEST_CASE("config validation") {
  SynthConfig cfg = small_config();
  cfg.vocab_size = 3;
  cfg.profile_dim = 5;
  CHECK_THROWS_AS(cfg.validate(), DataError);
  cfg = small_config();
  cfg.noise = 1.5;
  CHECK_THROWS_AS(cfg.validate(), DataError);
  cfg = small_config();
  cfg.n_users = 0;
  CHECK_THROWS_AS(cfg.validate(), DataError);
}

TEST_CASE("generation is deterministic per seed") {
  SynthConfig cfg = small_config();
  SynthDataset a = generate_dataset(cfg);
  SynthDataset b = generate_dataset(cfg);
  REQUIRE(a.logs.size() == b.logs.size());
  for (size_t i = 0; i < a.logs.size(); ++i) {
    CHECK(a.logs[i].device_id == b.logs[i].device_id);
    REQUIRE(a.logs[i].events.size() == b.logs[i].events.size());
    for (size_t e = 0; e < a.logs[i].events.size(); ++e) {
      CHECK(a.logs[i].events[e].ts == b.logs[i].events[e].ts);
      CHECK(a.logs[i].events[e].tokens == b.logs[i].events[e].tokens);
    }
  }
  REQUIRE(a.pairs.size() == b.pairs.size());
  for (size_t i = 0; i < a.pairs.size(); ++i) {
    CHECK(a.pairs[i].device_a == b.pairs[i].device_a);
    CHECK(a.pairs[i].device_b == b.pairs[i].device_b);
    CHECK(a.pairs[i].label == b.pairs[i].label);
  }

  cfg.seed = 12;
  SynthDataset c = generate_dataset(cfg);
  CHECK(c.logs[0].events[0].tokens != a.logs[0].events[0].tokens);
}

TEST_CASE("labels are consistent with user ownership") {
  SynthDataset ds = generate_dataset(small_config());
  int positives = 0, negatives = 0;
  for (const auto& p : ds.pairs) {
    if (p.label == 1) {
      CHECK(user_of(p.device_a) == user_of(p.device_b));
      ++positives;
    } else {
      CHECK(user_of(p.device_a) != user_of(p.device_b));
      ++negatives;
    }
  }
  CHECK(positives == 8);  // one per user at 2 devices each
  CHECK(negatives == 8);  // 1:1 sampling
}

TEST_CASE("single user yields one positive and no negatives") {
  SynthConfig cfg = small_config();
  cfg.n_users = 1;
  SynthDataset ds = generate_dataset(cfg);
  REQUIRE(ds.pairs.size() == 1);
  CHECK(ds.pairs[0].label == 1);
}

TEST_CASE("sample_pairs counts and determinism") {
  SynthConfig cfg = small_config();
  cfg.n_users = 2;
  SynthDataset ds = generate_dataset(cfg);

  auto pairs = sample_pairs(ds.logs, ds.user_of_log, 1.0, 99);
  int pos = 0, neg = 0;
  for (const auto& p : pairs) (p.label ? pos : neg)++;
  CHECK(pos == 2);
  CHECK(neg == 2);
  std::set<std::pair<std::string, std::string>> unique;
  for (const auto& p : pairs) unique.insert({p.device_a, p.device_b});
  CHECK(unique.size() == pairs.size());

  auto only_pos = sample_pairs(ds.logs, ds.user_of_log, 0.0, 99);
  CHECK(only_pos.size() == 2);
  for (const auto& p : only_pos) CHECK(p.label == 1);

  auto again = sample_pairs(ds.logs, ds.user_of_log, 1.0, 99);
  REQUIRE(again.size() == pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    CHECK(again[i].device_a == pairs[i].device_a);
    CHECK(again[i].device_b == pairs[i].device_b);
  }

  // all devices of one user only: no positive pairs possible
  std::vector<DeviceLog> solo = {ds.logs[0], ds.logs[2]};
  std::vector<int> solo_users = {0, 1};
  CHECK_THROWS_WITH_AS(sample_pairs(solo, solo_users, 1.0, 1),
                       doctest::Contains("no positive pairs"), DataError);
}

TEST_CASE("noise-free devices share the user's transition kernel") {
  SynthConfig cfg = small_config();
  cfg.noise = 0.0;

  // the kernel is a pure function of (seed, user, url)
  for (int url : {0, 17, 99}) {
    KernelCandidates k1 = transition_kernel(cfg, 3, url);
    KernelCandidates k2 = transition_kernel(cfg, 3, url);
    CHECK(k1.next == k2.next);
    CHECK(k1.prob == k2.prob);
  }

  // every observed transition of either device lies in the kernel support
  for (int device = 0; device < 2; ++device) {
    DeviceLog log = sample_device_log(cfg, 3, device);
    for (size_t i = 0; i + 1 < log.events.size(); ++i) {
      int cur = log.events[i].tokens[0];
      int nxt = log.events[i + 1].tokens[0];
      KernelCandidates k = transition_kernel(cfg, 3, cur);
      bool in_support = false;
      for (int cand : k.next) in_support |= cand == nxt;
      CHECK(in_support);
    }
  }
}

TEST_CASE("mean log length lands within ten percent") {
  SynthConfig cfg = small_config();
  cfg.n_users = 600;
  cfg.devices_per_user = 2;
  cfg.mean_log_len = 197;
  double total = 0.0;
  int count = 0;
  for (int u = 0; u < cfg.n_users; ++u)
    for (int d = 0; d < 2; ++d) {
      total += static_cast<double>(sample_device_log(cfg, u, d).events.size());
      ++count;
    }
  double mean = total / count;
  CHECK(mean > 197.0 * 0.9);
  CHECK(mean < 197.0 * 1.1);
  CHECK(count >= 1000);
}

TEST_CASE("exact length override") {
  SynthConfig cfg = small_config();
  DeviceLog log = sample_device_log(cfg, 0, 0, 200);
  CHECK(log.events.size() == 200);
  log.validate();
}

TEST_CASE("generate, write, load round trip") {
  SynthConfig cfg = small_config();
  SynthDataset ds = generate_dataset(cfg);
  const std::string path = "/tmp/hgnn_synth_roundtrip.jsonl";
  save_logs(ds.logs, path);
  auto loaded = load_logs(path);
  REQUIRE(loaded.size() == ds.logs.size());
  for (size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].device_id == ds.logs[i].device_id);
    REQUIRE(loaded[i].events.size() == ds.logs[i].events.size());
    for (size_t e = 0; e < loaded[i].events.size(); ++e) {
      CHECK(loaded[i].events[e].ts == ds.logs[i].events[e].ts);
      CHECK(loaded[i].events[e].tokens == ds.logs[i].events[e].tokens);
    }
  }
}

TEST_CASE("jaccard baseline separates the default corpus without saturating") {
  SynthConfig cfg;  // default knobs, smaller population for test speed
  cfg.n_users = 150;
  cfg.seed = 4242;
  SynthDataset ds = generate_dataset(cfg);

  std::unordered_map<std::string, std::set<int>> url_sets;
  for (const auto& log : ds.logs) {
    auto& s = url_sets[log.device_id];
    for (const auto& ev : log.events) s.insert(ev.tokens[0]);
  }
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& p : ds.pairs) {
    const auto& a = url_sets[p.device_a];
    const auto& b = url_sets[p.device_b];
    size_t inter = 0;
    for (int u : a) inter += b.count(u);
    double uni = static_cast<double>(a.size() + b.size() - inter);
    scores.push_back(uni > 0 ? static_cast<double>(inter) / uni : 0.0);
    labels.push_back(p.label);
  }
  EvalReport report = evaluate_threshold_sweep(scores, labels);
  MESSAGE("jaccard best F1 = ", report.best_f1, " at ", report.best_threshold);
  CHECK(report.best_f1 >= 0.6);
  CHECK(report.best_f1 <= 0.95);
}
