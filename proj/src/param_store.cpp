#include "hgnn/param_store.hpp"

#include <cmath>

#include "hgnn/rng.hpp"

namespace hgnn {

int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Param& ParamStore::add(std::string name, Shape shape) {
  if (contains(name))
    throw DataError("duplicate parameter name: " + name);
  for (int64_t d : shape)
    if (d < 1) throw ShapeError("parameter " + name + " has bad shape " + shape_str(shape));
  index_[name] = static_cast<int>(params_.size());
  params_.push_back(Param{std::move(name), std::move(shape), {}});
  Param& p = params_.back();
  p.values.assign(static_cast<size_t>(numel(p.shape)), 0.0);
  return p;
}

bool ParamStore::contains(std::string_view name) const {
  return index_.find(std::string(name)) != index_.end();
}

int ParamStore::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? -1 : it->second;
}

Param& ParamStore::at(std::string_view name) {
  int i = index_of(name);
  if (i < 0) throw DataError("unknown parameter: " + std::string(name));
  return params_[static_cast<size_t>(i)];
}

const Param& ParamStore::at(std::string_view name) const {
  int i = index_of(name);
  if (i < 0) throw DataError("unknown parameter: " + std::string(name));
  return params_[static_cast<size_t>(i)];
}

int64_t ParamStore::total_scalars() const {
  int64_t n = 0;
  for (const auto& p : params_) n += numel(p.shape);
  return n;
}

Param& add_weight(ParamStore& store, std::string name, Shape shape,
                  int64_t fan_in) {
  Param& p = store.add(std::move(name), std::move(shape));
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  RngStream rng(substream(substream(store.seed, "init"), p.name));
  for (double& v : p.values) v = rng.uniform(-bound, bound);
  return p;
}

Param& add_bias(ParamStore& store, std::string name, int64_t n) {
  return store.add(std::move(name), Shape{n});
}

}  // namespace hgnn
