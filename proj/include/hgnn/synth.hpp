#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "hgnn/graph.hpp"
#include "hgnn/pairs.hpp"

namespace hgnn {

// Synthetic multi-device corpus: each user owns a compact Markov transition
// kernel over the URL vocabulary; every device of that user samples from it,
// perturbed by `noise` (probability of a uniform random jump per step).
struct SynthConfig {
  int n_users = 0;
  int devices_per_user = 2;
  int mean_log_len = 197;
  int vocab_size = 600;
  int profile_dim = 12;  // favorite URLs per user
  double noise = 0.35;   // cross-device divergence
  uint64_t seed = 1;

  void validate() const;
};

struct SynthDataset {
  std::vector<DeviceLog> logs;
  std::vector<PairExample> pairs;
  std::vector<int> user_of_log;  // aligned with logs
};

// Per-state transition candidates of one user's kernel: a deterministic
// function of (config seed, user, current URL).
struct KernelCandidates {
  std::array<int, 4> next;
  std::array<double, 4> prob;
};

KernelCandidates transition_kernel(const SynthConfig& cfg, int user,
                                   int current_url);

// One device's log; exact_len == 0 draws the length from the truncated
// geometric distribution around mean_log_len.
DeviceLog sample_device_log(const SynthConfig& cfg, int user, int device,
                            int exact_len = 0);

// All same-user pairs as positives plus ceil(neg_ratio * positives) distinct
// uniform cross-user negatives. Deterministic per seed.
std::vector<PairExample> sample_pairs(const std::vector<DeviceLog>& logs,
                                      const std::vector<int>& user_of_log,
                                      double neg_ratio, uint64_t seed);

SynthDataset generate_dataset(const SynthConfig& cfg, double neg_ratio = 1.0);

}  // namespace hgnn
