#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hgnn/errors.hpp"

namespace hgnn {

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

// One named learnable array. Values are plain row-major doubles; tensors on a
// tape bind to these by name when a forward pass starts.
struct Param {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

// Ordered collection of named parameters. Insertion order is the canonical
// order everywhere (initialization, checkpoints, gradient buffers), which is
// what makes reruns bit-identical.
class ParamStore {
public:
  Param& add(std::string name, Shape shape);

  bool contains(std::string_view name) const;
  int index_of(std::string_view name) const;  // -1 when absent
  Param& at(std::string_view name);
  const Param& at(std::string_view name) const;
  Param& at(size_t idx) { return params_[idx]; }
  const Param& at(size_t idx) const { return params_[idx]; }

  size_t size() const { return params_.size(); }
  int64_t total_scalars() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  uint64_t seed = 0;

private:
  std::vector<Param> params_;
  std::unordered_map<std::string, int> index_;
};

// Fills a weight matrix entry with uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
// draws from the store's init substream; biases stay zero.
Param& add_weight(ParamStore& store, std::string name, Shape shape,
                  int64_t fan_in);
Param& add_bias(ParamStore& store, std::string name, int64_t n);

}  // namespace hgnn
