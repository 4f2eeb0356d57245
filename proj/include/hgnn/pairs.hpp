#pragma once

#include <string>
#include <vector>

namespace hgnn {

// A labeled device pair: 1 iff both devices belong to the same user.
struct PairExample {
  std::string device_a;
  std::string device_b;
  int label = 0;
};

// CSV "device_a,device_b,label" with header.
std::vector<PairExample> load_pairs(const std::string& path);
void save_pairs(const std::vector<PairExample>& pairs, const std::string& path);

// CSV "device_a,device_b,score" with header.
void save_scores(const std::vector<PairExample>& pairs,
                 const std::vector<double>& scores, const std::string& path);

}  // namespace hgnn
