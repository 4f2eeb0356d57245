#include "hgnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace hgnn {

namespace {

void matmul_acc(const double* a, const double* b, double* out, int64_t m,
                int64_t k, int64_t n) {
  // out[m,n] += a[m,k] * b[k,n]
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* oi = out + i * n;
    for (int64_t t = 0; t < k; ++t) {
      double av = ai[t];
      if (av == 0.0) continue;
      const double* bt = b + t * n;
      for (int64_t j = 0; j < n; ++j) oi[j] += av * bt[j];
    }
  }
}

void matmul_nt_acc(const double* a, const double* b, double* out, int64_t m,
                   int64_t k, int64_t n) {
  // out[m,n] += a[m,k] * b[n,k]^T
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* oi = out + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (int64_t t = 0; t < k; ++t) s += ai[t] * bj[t];
      oi[j] += s;
    }
  }
}

void matmul_tn_acc(const double* a, const double* b, double* out, int64_t m,
                   int64_t k, int64_t n) {
  // out[k,n] += a[m,k]^T * b[m,n]
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (int64_t t = 0; t < k; ++t) {
      double av = ai[t];
      if (av == 0.0) continue;
      double* ot = out + t * n;
      for (int64_t j = 0; j < n; ++j) ot[j] += av * bi[j];
    }
  }
}

}  // namespace

// --- Tensor accessors --------------------------------------------------------

const Shape& Tensor::shape() const { return tape_->node(id_).shape; }
const std::vector<double>& Tensor::values() const {
  return tape_->node(id_).values;
}
const std::vector<double>& Tensor::grad() const {
  return tape_->node(id_).grad;
}
int64_t Tensor::numel() const {
  return static_cast<int64_t>(tape_->node(id_).values.size());
}
double Tensor::scalar() const {
  const auto& v = values();
  if (v.size() != 1)
    throw ShapeError("scalar() on tensor of shape " + shape_str(shape()));
  return v[0];
}

// --- Tape basics ---------------------------------------------------------------

Tensor Tape::push(Node n) {
  if (!n.needs_grad)
    for (int in : n.inputs)
      if (node(in).needs_grad) {
        n.needs_grad = true;
        break;
      }
  nodes_.push_back(std::move(n));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::check_same_tape(Tensor t) const {
  if (t.tape() != this) throw ShapeError("tensors belong to different tapes");
}

void Tape::ensure_grad(Node& n) {
  if (n.grad.size() != n.values.size()) n.grad.assign(n.values.size(), 0.0);
}

Tensor Tape::leaf(Shape shape, std::vector<double> values, bool needs_grad) {
  if (numel(shape) != static_cast<int64_t>(values.size()))
    throw ShapeError("leaf value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  Node n;
  n.op = Op::Leaf;
  n.needs_grad = needs_grad;
  n.shape = std::move(shape);
  n.values = std::move(values);
  return push(std::move(n));
}

Tensor Tape::constant(Shape shape, std::vector<double> values) {
  return leaf(std::move(shape), std::move(values), false);
}

Tensor Tape::zeros(Shape shape) {
  std::vector<double> v(static_cast<size_t>(numel(shape)), 0.0);
  return leaf(std::move(shape), std::move(v), false);
}

Tensor Tape::param(const ParamStore& store, std::string_view name) {
  if (bound_store_ == nullptr) {
    bound_store_ = &store;
    param_node_.assign(store.size(), -1);
  } else if (bound_store_ != &store) {
    throw DataError("tape is already bound to a different ParamStore");
  }
  int idx = store.index_of(name);
  if (idx < 0) throw DataError("unknown parameter: " + std::string(name));
  if (param_node_[static_cast<size_t>(idx)] >= 0)
    return Tensor(this, param_node_[static_cast<size_t>(idx)]);
  const Param& p = store.at(static_cast<size_t>(idx));
  Tensor t = leaf(p.shape, p.values, true);
  node(t.node_id()).param_index = idx;
  param_node_[static_cast<size_t>(idx)] = t.node_id();
  return t;
}

// --- forward ops ----------------------------------------------------------------

Tensor Tape::matmul(Tensor a, Tensor b) {
  check_same_tape(a);
  check_same_tape(b);
  const Node& na = node(a.node_id());
  const Node& nb = node(b.node_id());
  if (na.shape.size() != 2 || nb.shape.size() != 2 ||
      na.shape[1] != nb.shape[0])
    throw ShapeError("matmul shape mismatch: " + shape_str(na.shape) + " x " +
                     shape_str(nb.shape));
  int64_t m = na.shape[0], k = na.shape[1], n = nb.shape[1];
  Node out;
  out.op = Op::Matmul;
  out.shape = {m, n};
  out.values.assign(static_cast<size_t>(m * n), 0.0);
  out.inputs = {a.node_id(), b.node_id()};
  matmul_acc(na.values.data(), nb.values.data(), out.values.data(), m, k, n);
  return push(std::move(out));
}

Tensor Tape::matmul_nt(Tensor a, Tensor b) {
  check_same_tape(a);
  check_same_tape(b);
  const Node& na = node(a.node_id());
  const Node& nb = node(b.node_id());
  if (na.shape.size() != 2 || nb.shape.size() != 2 ||
      na.shape[1] != nb.shape[1])
    throw ShapeError("matmul_nt shape mismatch: " + shape_str(na.shape) +
                     " x " + shape_str(nb.shape) + "^T");
  int64_t m = na.shape[0], k = na.shape[1], n = nb.shape[0];
  Node out;
  out.op = Op::MatmulNT;
  out.shape = {m, n};
  out.values.assign(static_cast<size_t>(m * n), 0.0);
  out.inputs = {a.node_id(), b.node_id()};
  matmul_nt_acc(na.values.data(), nb.values.data(), out.values.data(), m, k, n);
  return push(std::move(out));
}

Tensor Tape::matvec(Tensor a, Tensor x) {
  check_same_tape(a);
  check_same_tape(x);
  const Node& na = node(a.node_id());
  const Node& nx = node(x.node_id());
  if (na.shape.size() != 2 || nx.shape.size() != 1 ||
      na.shape[1] != nx.shape[0])
    throw ShapeError("matvec shape mismatch: " + shape_str(na.shape) + " x " +
                     shape_str(nx.shape));
  int64_t m = na.shape[0], k = na.shape[1];
  Node out;
  out.op = Op::Matvec;
  out.shape = {m};
  out.values.assign(static_cast<size_t>(m), 0.0);
  out.inputs = {a.node_id(), x.node_id()};
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = na.values.data() + i * k;
    double s = 0.0;
    for (int64_t t = 0; t < k; ++t) s += ai[t] * nx.values[static_cast<size_t>(t)];
    out.values[static_cast<size_t>(i)] = s;
  }
  return push(std::move(out));
}

Tensor Tape::add(Tensor a, Tensor b) {
  check_same_tape(a);
  check_same_tape(b);
  const Node& na = node(a.node_id());
  const Node& nb = node(b.node_id());
  if (na.shape != nb.shape)
    throw ShapeError("add shape mismatch: " + shape_str(na.shape) + " vs " +
                     shape_str(nb.shape));
  Node out;
  out.op = Op::Add;
  out.shape = na.shape;
  out.values.resize(na.values.size());
  out.inputs = {a.node_id(), b.node_id()};
  for (size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = na.values[i] + nb.values[i];
  return push(std::move(out));
}

Tensor Tape::sub(Tensor a, Tensor b) {
  check_same_tape(a);
  check_same_tape(b);
  const Node& na = node(a.node_id());
  const Node& nb = node(b.node_id());
  if (na.shape != nb.shape)
    throw ShapeError("sub shape mismatch: " + shape_str(na.shape) + " vs " +
                     shape_str(nb.shape));
  Node out;
  out.op = Op::Sub;
  out.shape = na.shape;
  out.values.resize(na.values.size());
  out.inputs = {a.node_id(), b.node_id()};
  for (size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = na.values[i] - nb.values[i];
  return push(std::move(out));
}

Tensor Tape::hadamard(Tensor a, Tensor b) {
  check_same_tape(a);
  check_same_tape(b);
  const Node& na = node(a.node_id());
  const Node& nb = node(b.node_id());
  if (na.shape != nb.shape)
    throw ShapeError("hadamard shape mismatch: " + shape_str(na.shape) +
                     " vs " + shape_str(nb.shape));
  Node out;
  out.op = Op::Hadamard;
  out.shape = na.shape;
  out.values.resize(na.values.size());
  out.inputs = {a.node_id(), b.node_id()};
  for (size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = na.values[i] * nb.values[i];
  return push(std::move(out));
}

Tensor Tape::scale(Tensor a, double c) {
  check_same_tape(a);
  const Node& na = node(a.node_id());
  Node out;
  out.op = Op::Scale;
  out.shape = na.shape;
  out.values.resize(na.values.size());
  out.inputs = {a.node_id()};
  out.c = c;
  for (size_t i = 0; i < out.values.size(); ++i) out.values[i] = na.values[i] * c;
  return push(std::move(out));
}

Tensor Tape::add_rowvec(Tensor a, Tensor b) {
  check_same_tape(a);
  check_same_tape(b);
  const Node& na = node(a.node_id());
  const Node& nb = node(b.node_id());
  if (na.shape.size() != 2 || nb.shape.size() != 1 ||
      na.shape[1] != nb.shape[0])
    throw ShapeError("add_rowvec shape mismatch: " + shape_str(na.shape) +
                     " + " + shape_str(nb.shape));
  int64_t m = na.shape[0], n = na.shape[1];
  Node out;
  out.op = Op::AddRow;
  out.shape = na.shape;
  out.values.resize(na.values.size());
  out.inputs = {a.node_id(), b.node_id()};
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j)
      out.values[static_cast<size_t>(i * n + j)] =
          na.values[static_cast<size_t>(i * n + j)] + nb.values[static_cast<size_t>(j)];
  return push(std::move(out));
}

Tensor Tape::mul_rowvec(Tensor a, Tensor b) {
  check_same_tape(a);
  check_same_tape(b);
  const Node& na = node(a.node_id());
  const Node& nb = node(b.node_id());
  if (na.shape.size() != 2 || nb.shape.size() != 1 ||
      na.shape[1] != nb.shape[0])
    throw ShapeError("mul_rowvec shape mismatch: " + shape_str(na.shape) +
                     " * " + shape_str(nb.shape));
  int64_t m = na.shape[0], n = na.shape[1];
  Node out;
  out.op = Op::MulRow;
  out.shape = na.shape;
  out.values.resize(na.values.size());
  out.inputs = {a.node_id(), b.node_id()};
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j)
      out.values[static_cast<size_t>(i * n + j)] =
          na.values[static_cast<size_t>(i * n + j)] * nb.values[static_cast<size_t>(j)];
  return push(std::move(out));
}

Tensor Tape::sigmoid(Tensor a) {
  check_same_tape(a);
  const Node& na = node(a.node_id());
  Node out;
  out.op = Op::Sigmoid;
  out.shape = na.shape;
  out.values.resize(na.values.size());
  out.inputs = {a.node_id()};
  for (size_t i = 0; i < out.values.size(); ++i) {
    double x = na.values[i];
    // branch keeps exp() argument negative; no overflow either direction
    out.values[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                           : std::exp(x) / (1.0 + std::exp(x));
  }
  return push(std::move(out));
}

Tensor Tape::tanh_act(Tensor a) {
  check_same_tape(a);
  const Node& na = node(a.node_id());
  Node out;
  out.op = Op::Tanh;
  out.shape = na.shape;
  out.values.resize(na.values.size());
  out.inputs = {a.node_id()};
  for (size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = std::tanh(na.values[i]);
  return push(std::move(out));
}

Tensor Tape::relu(Tensor a) {
  check_same_tape(a);
  const Node& na = node(a.node_id());
  Node out;
  out.op = Op::Relu;
  out.shape = na.shape;
  out.values.resize(na.values.size());
  out.inputs = {a.node_id()};
  for (size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = na.values[i] > 0 ? na.values[i] : 0.0;
  return push(std::move(out));
}

Tensor Tape::softmax_rows(Tensor logits) {
  return softmax_rows_impl(logits, {});
}

Tensor Tape::softmax_rows(Tensor logits, const std::vector<uint8_t>& mask) {
  const Node& nl = node(logits.node_id());
  if (!mask.empty() && mask.size() != nl.values.size())
    throw ShapeError("softmax mask size " + std::to_string(mask.size()) +
                     " does not match logits " + shape_str(nl.shape));
  return softmax_rows_impl(logits, mask);
}

Tensor Tape::softmax_rows_impl(Tensor logits, std::vector<uint8_t> mask) {
  check_same_tape(logits);
  const Node& nl = node(logits.node_id());
  if (nl.shape.size() != 2)
    throw ShapeError("softmax_rows needs a matrix, got " + shape_str(nl.shape));
  int64_t m = nl.shape[0], n = nl.shape[1];
  Node out;
  out.op = Op::SoftmaxRows;
  out.shape = nl.shape;
  out.values.assign(nl.values.size(), 0.0);
  out.inputs = {logits.node_id()};
  out.mask = std::move(mask);
  const bool masked = !out.mask.empty();
  for (int64_t i = 0; i < m; ++i) {
    const double* in = nl.values.data() + i * n;
    double* o = out.values.data() + i * n;
    const uint8_t* km = masked ? out.mask.data() + i * n : nullptr;
    double mx = -HUGE_VAL;
    for (int64_t j = 0; j < n; ++j)
      if (!masked || km[j]) mx = std::max(mx, in[j]);
    if (mx == -HUGE_VAL)
      throw ShapeError("softmax_rows: row " + std::to_string(i) +
                       " is fully masked");
    double sum = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      if (masked && !km[j]) continue;
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (int64_t j = 0; j < n; ++j)
      if (!masked || km[j]) o[j] /= sum;
  }
  return push(std::move(out));
}

Tensor Tape::mean_pool_rows(Tensor a) {
  check_same_tape(a);
  const Node& na = node(a.node_id());
  if (na.shape.size() != 2)
    throw ShapeError("mean_pool_rows needs a matrix, got " + shape_str(na.shape));
  int64_t m = na.shape[0], n = na.shape[1];
  Node out;
  out.op = Op::MeanPoolRows;
  out.shape = {n};
  out.values.assign(static_cast<size_t>(n), 0.0);
  out.inputs = {a.node_id()};
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j)
      out.values[static_cast<size_t>(j)] += na.values[static_cast<size_t>(i * n + j)];
  for (int64_t j = 0; j < n; ++j) out.values[static_cast<size_t>(j)] /= static_cast<double>(m);
  return push(std::move(out));
}

Tensor Tape::max_pool_rows(Tensor a) {
  check_same_tape(a);
  const Node& na = node(a.node_id());
  if (na.shape.size() != 2)
    throw ShapeError("max_pool_rows needs a matrix, got " + shape_str(na.shape));
  int64_t m = na.shape[0], n = na.shape[1];
  Node out;
  out.op = Op::MaxPoolRows;
  out.shape = {n};
  out.values.assign(static_cast<size_t>(n), 0.0);
  out.inputs = {a.node_id()};
  out.idx.assign(static_cast<size_t>(n), 0);
  for (int64_t j = 0; j < n; ++j) {
    double best = na.values[static_cast<size_t>(j)];
    int64_t arg = 0;
    for (int64_t i = 1; i < m; ++i) {
      double v = na.values[static_cast<size_t>(i * n + j)];
      if (v > best) {  // strict: ties keep the lowest row index
        best = v;
        arg = i;
      }
    }
    out.values[static_cast<size_t>(j)] = best;
    out.idx[static_cast<size_t>(j)] = arg;
  }
  return push(std::move(out));
}

Tensor Tape::concat(Tensor a, Tensor b) {
  check_same_tape(a);
  check_same_tape(b);
  const Node& na = node(a.node_id());
  const Node& nb = node(b.node_id());
  if (na.shape.size() != 1 || nb.shape.size() != 1)
    throw ShapeError("concat needs vectors, got " + shape_str(na.shape) +
                     " and " + shape_str(nb.shape));
  Node out;
  out.op = Op::ConcatVec;
  out.shape = {na.shape[0] + nb.shape[0]};
  out.values.reserve(na.values.size() + nb.values.size());
  out.values.insert(out.values.end(), na.values.begin(), na.values.end());
  out.values.insert(out.values.end(), nb.values.begin(), nb.values.end());
  out.inputs = {a.node_id(), b.node_id()};
  return push(std::move(out));
}

Tensor Tape::concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  int64_t cols = -1, rows = 0;
  for (Tensor t : parts) {
    check_same_tape(t);
    const Node& n = node(t.node_id());
    int64_t c = n.shape.size() == 1 ? n.shape[0] : n.shape[1];
    int64_t r = n.shape.size() == 1 ? 1 : n.shape[0];
    if (n.shape.size() > 2) throw ShapeError("concat_rows: rank > 2");
    if (cols == -1) cols = c;
    if (c != cols)
      throw ShapeError("concat_rows column mismatch: " + std::to_string(c) +
                       " vs " + std::to_string(cols));
    rows += r;
  }
  Node out;
  out.op = Op::ConcatRows;
  out.shape = {rows, cols};
  out.values.reserve(static_cast<size_t>(rows * cols));
  out.inputs.reserve(parts.size());
  for (Tensor t : parts) {
    const Node& n = node(t.node_id());
    out.values.insert(out.values.end(), n.values.begin(), n.values.end());
    out.inputs.push_back(t.node_id());
  }
  return push(std::move(out));
}

Tensor Tape::gather_rows(Tensor a, std::vector<int64_t> rows) {
  check_same_tape(a);
  const Node& na = node(a.node_id());
  if (na.shape.size() != 2)
    throw ShapeError("gather_rows needs a matrix, got " + shape_str(na.shape));
  int64_t n = na.shape[1];
  for (int64_t r : rows)
    if (r < 0 || r >= na.shape[0])
      throw ShapeError("gather_rows: row " + std::to_string(r) +
                       " out of range for " + shape_str(na.shape));
  Node out;
  out.op = Op::GatherRows;
  out.shape = {static_cast<int64_t>(rows.size()), n};
  out.values.resize(rows.size() * static_cast<size_t>(n));
  out.inputs = {a.node_id()};
  for (size_t i = 0; i < rows.size(); ++i)
    std::memcpy(out.values.data() + i * static_cast<size_t>(n),
                na.values.data() + rows[i] * n, sizeof(double) * static_cast<size_t>(n));
  out.idx = std::move(rows);
  return push(std::move(out));
}

Tensor Tape::row(Tensor a, int64_t i) {
  check_same_tape(a);
  const Node& na = node(a.node_id());
  if (na.shape.size() != 2 || i < 0 || i >= na.shape[0])
    throw ShapeError("row " + std::to_string(i) + " out of range for " +
                     shape_str(na.shape));
  int64_t n = na.shape[1];
  Node out;
  out.op = Op::Row;
  out.shape = {n};
  out.values.assign(na.values.begin() + i * n, na.values.begin() + (i + 1) * n);
  out.inputs = {a.node_id()};
  out.idx = {i};
  return push(std::move(out));
}

Tensor Tape::sum_all(Tensor a) {
  check_same_tape(a);
  const Node& na = node(a.node_id());
  Node out;
  out.op = Op::SumAll;
  out.shape = {1};
  double s = 0.0;
  for (double v : na.values) s += v;
  out.values = {s};
  out.inputs = {a.node_id()};
  return push(std::move(out));
}

Tensor Tape::reshape(Tensor a, Shape shape) {
  check_same_tape(a);
  const Node& na = node(a.node_id());
  if (numel(shape) != static_cast<int64_t>(na.values.size()))
    throw ShapeError("reshape " + shape_str(na.shape) + " -> " +
                     shape_str(shape) + " changes element count");
  Node out;
  out.op = Op::Reshape;
  out.shape = std::move(shape);
  out.values = na.values;
  out.inputs = {a.node_id()};
  return push(std::move(out));
}

Tensor Tape::dropout(Tensor a, double rate, RngStream& rng) {
  check_same_tape(a);
  if (rate < 0.0 || rate >= 1.0)
    throw ShapeError("dropout rate must be in [0,1), got " + std::to_string(rate));
  const Node& na = node(a.node_id());
  Node out;
  out.op = Op::Dropout;
  out.shape = na.shape;
  out.values.resize(na.values.size());
  out.inputs = {a.node_id()};
  out.c = rate;
  out.mask.resize(na.values.size());
  double keep_scale = rate == 0.0 ? 1.0 : 1.0 / (1.0 - rate);
  for (size_t i = 0; i < out.values.size(); ++i) {
    bool keep = rate == 0.0 || !rng.bernoulli(rate);
    out.mask[i] = keep ? 1 : 0;
    out.values[i] = keep ? na.values[i] * keep_scale : 0.0;
  }
  return push(std::move(out));
}

Tensor Tape::bce(Tensor y_hat, double y) {
  check_same_tape(y_hat);
  const Node& na = node(y_hat.node_id());
  if (na.values.size() != 1)
    throw ShapeError("bce expects a scalar prediction, got " + shape_str(na.shape));
  constexpr double kLo = 1e-7, kHi = 1.0 - 1e-7;
  double c = std::clamp(na.values[0], kLo, kHi);
  Node out;
  out.op = Op::Bce;
  out.shape = {1};
  out.values = {-(y * std::log(c) + (1.0 - y) * std::log(1.0 - c))};
  out.inputs = {y_hat.node_id()};
  out.c = y;
  return push(std::move(out));
}

// --- backward ------------------------------------------------------------------

void Tape::zero_grad() {
  for (Node& n : nodes_) n.grad.clear();
}

void Tape::backward(Tensor loss) {
  check_same_tape(loss);
  Node& ln = node(loss.node_id());
  if (ln.values.size() != 1)
    throw ShapeError("backward needs a scalar loss, got " + shape_str(ln.shape));
  // only leaf gradients accumulate across calls; intermediates restart
  for (Node& n : nodes_)
    if (n.op != Op::Leaf) n.grad.clear();
  ensure_grad(ln);
  ln.grad[0] += 1.0;

  for (int id = loss.node_id(); id >= 0; --id) {
    Node& n = node(id);
    if (!n.needs_grad || n.grad.empty()) continue;
    const double* g = n.grad.data();
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Matmul: {
        Node& a = node(n.inputs[0]);
        Node& b = node(n.inputs[1]);
        int64_t m = a.shape[0], k = a.shape[1], nn = b.shape[1];
        if (a.needs_grad) {
          ensure_grad(a);  // da += g * b^T
          matmul_nt_acc(g, b.values.data(), a.grad.data(), m, nn, k);
        }
        if (b.needs_grad) {
          ensure_grad(b);  // db += a^T * g
          matmul_tn_acc(a.values.data(), g, b.grad.data(), m, k, nn);
        }
        break;
      }
      case Op::MatmulNT: {
        Node& a = node(n.inputs[0]);
        Node& b = node(n.inputs[1]);
        int64_t m = a.shape[0], k = a.shape[1], nn = b.shape[0];
        if (a.needs_grad) {
          ensure_grad(a);  // da += g * b
          matmul_acc(g, b.values.data(), a.grad.data(), m, nn, k);
        }
        if (b.needs_grad) {
          ensure_grad(b);  // db += g^T * a
          matmul_tn_acc(g, a.values.data(), b.grad.data(), m, nn, k);
        }
        break;
      }
      case Op::Matvec: {
        Node& a = node(n.inputs[0]);
        Node& x = node(n.inputs[1]);
        int64_t m = a.shape[0], k = a.shape[1];
        if (a.needs_grad) {
          ensure_grad(a);
          for (int64_t i = 0; i < m; ++i) {
            double gi = g[i];
            if (gi == 0.0) continue;
            double* ai = a.grad.data() + i * k;
            for (int64_t t = 0; t < k; ++t) ai[t] += gi * x.values[static_cast<size_t>(t)];
          }
        }
        if (x.needs_grad) {
          ensure_grad(x);
          for (int64_t i = 0; i < m; ++i) {
            double gi = g[i];
            if (gi == 0.0) continue;
            const double* ai = a.values.data() + i * k;
            for (int64_t t = 0; t < k; ++t) x.grad[static_cast<size_t>(t)] += gi * ai[t];
          }
        }
        break;
      }
      case Op::Add: {
        for (int s = 0; s < 2; ++s) {
          Node& in = node(n.inputs[static_cast<size_t>(s)]);
          if (!in.needs_grad) continue;
          ensure_grad(in);
          for (size_t i = 0; i < in.grad.size(); ++i) in.grad[i] += g[i];
        }
        break;
      }
      case Op::Sub: {
        Node& a = node(n.inputs[0]);
        Node& b = node(n.inputs[1]);
        if (a.needs_grad) {
          ensure_grad(a);
          for (size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += g[i];
        }
        if (b.needs_grad) {
          ensure_grad(b);
          for (size_t i = 0; i < b.grad.size(); ++i) b.grad[i] -= g[i];
        }
        break;
      }
      case Op::Hadamard: {
        Node& a = node(n.inputs[0]);
        Node& b = node(n.inputs[1]);
        if (a.needs_grad) {
          ensure_grad(a);
          for (size_t i = 0; i < a.grad.size(); ++i)
            a.grad[i] += g[i] * b.values[i];
        }
        if (b.needs_grad) {
          ensure_grad(b);
          for (size_t i = 0; i < b.grad.size(); ++i)
            b.grad[i] += g[i] * a.values[i];
        }
        break;
      }
      case Op::Scale: {
        Node& a = node(n.inputs[0]);
        if (a.needs_grad) {
          ensure_grad(a);
          for (size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += g[i] * n.c;
        }
        break;
      }
      case Op::AddRow: {
        Node& a = node(n.inputs[0]);
        Node& b = node(n.inputs[1]);
        int64_t m = a.shape[0], nn = a.shape[1];
        if (a.needs_grad) {
          ensure_grad(a);
          for (size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += g[i];
        }
        if (b.needs_grad) {
          ensure_grad(b);
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < nn; ++j)
              b.grad[static_cast<size_t>(j)] += g[i * nn + j];
        }
        break;
      }
      case Op::MulRow: {
        Node& a = node(n.inputs[0]);
        Node& b = node(n.inputs[1]);
        int64_t m = a.shape[0], nn = a.shape[1];
        if (a.needs_grad) {
          ensure_grad(a);
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < nn; ++j)
              a.grad[static_cast<size_t>(i * nn + j)] +=
                  g[i * nn + j] * b.values[static_cast<size_t>(j)];
        }
        if (b.needs_grad) {
          ensure_grad(b);
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < nn; ++j)
              b.grad[static_cast<size_t>(j)] +=
                  g[i * nn + j] * a.values[static_cast<size_t>(i * nn + j)];
        }
        break;
      }
      case Op::Sigmoid: {
        Node& a = node(n.inputs[0]);
        if (a.needs_grad) {
          ensure_grad(a);
          for (size_t i = 0; i < a.grad.size(); ++i) {
            double y = n.values[i];
            a.grad[i] += g[i] * y * (1.0 - y);
          }
        }
        break;
      }
      case Op::Tanh: {
        Node& a = node(n.inputs[0]);
        if (a.needs_grad) {
          ensure_grad(a);
          for (size_t i = 0; i < a.grad.size(); ++i) {
            double y = n.values[i];
            a.grad[i] += g[i] * (1.0 - y * y);
          }
        }
        break;
      }
      case Op::Relu: {
        Node& a = node(n.inputs[0]);
        if (a.needs_grad) {
          ensure_grad(a);
          for (size_t i = 0; i < a.grad.size(); ++i)
            if (a.values[i] > 0) a.grad[i] += g[i];
        }
        break;
      }
      case Op::SoftmaxRows: {
        Node& a = node(n.inputs[0]);
        if (a.needs_grad) {
          ensure_grad(a);
          int64_t m = n.shape[0], nn = n.shape[1];
          for (int64_t i = 0; i < m; ++i) {
            const double* yi = n.values.data() + i * nn;
            const double* gi = g + i * nn;
            double dot = 0.0;
            for (int64_t j = 0; j < nn; ++j) dot += gi[j] * yi[j];
            double* ai = a.grad.data() + i * nn;
            for (int64_t j = 0; j < nn; ++j) ai[j] += yi[j] * (gi[j] - dot);
          }
        }
        break;
      }
      case Op::MeanPoolRows: {
        Node& a = node(n.inputs[0]);
        if (a.needs_grad) {
          ensure_grad(a);
          int64_t m = a.shape[0], nn = a.shape[1];
          double inv = 1.0 / static_cast<double>(m);
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < nn; ++j)
              a.grad[static_cast<size_t>(i * nn + j)] += g[j] * inv;
        }
        break;
      }
      case Op::MaxPoolRows: {
        Node& a = node(n.inputs[0]);
        if (a.needs_grad) {
          ensure_grad(a);
          int64_t nn = a.shape[1];
          for (int64_t j = 0; j < nn; ++j)
            a.grad[static_cast<size_t>(n.idx[static_cast<size_t>(j)] * nn + j)] += g[j];
        }
        break;
      }
      case Op::ConcatVec: {
        Node& a = node(n.inputs[0]);
        Node& b = node(n.inputs[1]);
        size_t na = a.values.size();
        if (a.needs_grad) {
          ensure_grad(a);
          for (size_t i = 0; i < na; ++i) a.grad[i] += g[i];
        }
        if (b.needs_grad) {
          ensure_grad(b);
          for (size_t i = 0; i < b.values.size(); ++i) b.grad[i] += g[na + i];
        }
        break;
      }
      case Op::ConcatRows: {
        size_t off = 0;
        for (int in_id : n.inputs) {
          Node& in = node(in_id);
          if (in.needs_grad) {
            ensure_grad(in);
            for (size_t i = 0; i < in.values.size(); ++i)
              in.grad[i] += g[off + i];
          }
          off += in.values.size();
        }
        break;
      }
      case Op::GatherRows: {
        Node& a = node(n.inputs[0]);
        if (a.needs_grad) {
          ensure_grad(a);
          int64_t nn = a.shape[1];
          for (size_t r = 0; r < n.idx.size(); ++r) {
            double* dst = a.grad.data() + n.idx[r] * nn;
            const double* src = g + r * static_cast<size_t>(nn);
            for (int64_t j = 0; j < nn; ++j) dst[j] += src[j];
          }
        }
        break;
      }
      case Op::Row: {
        Node& a = node(n.inputs[0]);
        if (a.needs_grad) {
          ensure_grad(a);
          int64_t nn = a.shape[1];
          double* dst = a.grad.data() + n.idx[0] * nn;
          for (int64_t j = 0; j < nn; ++j) dst[j] += g[j];
        }
        break;
      }
      case Op::SumAll: {
        Node& a = node(n.inputs[0]);
        if (a.needs_grad) {
          ensure_grad(a);
          for (size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += g[0];
        }
        break;
      }
      case Op::Reshape: {
        Node& a = node(n.inputs[0]);
        if (a.needs_grad) {
          ensure_grad(a);
          for (size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += g[i];
        }
        break;
      }
      case Op::Dropout: {
        Node& a = node(n.inputs[0]);
        if (a.needs_grad) {
          ensure_grad(a);
          double keep_scale = n.c == 0.0 ? 1.0 : 1.0 / (1.0 - n.c);
          for (size_t i = 0; i < a.grad.size(); ++i)
            if (n.mask[i]) a.grad[i] += g[i] * keep_scale;
        }
        break;
      }
      case Op::Bce: {
        Node& a = node(n.inputs[0]);
        if (a.needs_grad) {
          ensure_grad(a);
          constexpr double kLo = 1e-7, kHi = 1.0 - 1e-7;
          double yh = a.values[0];
          if (yh > kLo && yh < kHi)  // clamped region has zero slope
            a.grad[0] += g[0] * (yh - n.c) / (yh * (1.0 - yh));
        }
        break;
      }
    }
  }
}

std::vector<std::vector<double>> Tape::param_grads() const {
  std::vector<std::vector<double>> out(param_node_.size());
  for (size_t i = 0; i < param_node_.size(); ++i) {
    int id = param_node_[i];
    if (id < 0) continue;
    const Node& n = node(id);
    if (n.grad.empty())
      out[i].assign(n.values.size(), 0.0);
    else
      out[i] = n.grad;
  }
  return out;
}

// --- GRU -----------------------------------------------------------------------

GruWeights bind_gru(Tape& tape, const ParamStore& store,
                    const std::string& prefix) {
  GruWeights w;
  w.w_z = tape.param(store, prefix + ".w_z");
  w.w_r = tape.param(store, prefix + ".w_r");
  w.w_h = tape.param(store, prefix + ".w_h");
  w.b_z = tape.param(store, prefix + ".b_z");
  w.b_r = tape.param(store, prefix + ".b_r");
  w.b_h = tape.param(store, prefix + ".b_h");
  return w;
}

Tensor gru_step(Tensor h, Tensor x, const GruWeights& w) {
  Tape& t = *h.tape();
  if (h.shape() != x.shape())
    throw ShapeError("gru_step: h " + shape_str(h.shape()) + " vs x " +
                     shape_str(x.shape()));
  if (w.w_z.shape()[1] != h.shape()[0] * 2)
    throw ShapeError("gru_step: weights expect dim " +
                     std::to_string(w.w_z.shape()[1] / 2) + ", state has " +
                     std::to_string(h.shape()[0]));
  Tensor xh = t.concat(x, h);
  Tensor z = t.sigmoid(t.add(t.matvec(w.w_z, xh), w.b_z));
  Tensor r = t.sigmoid(t.add(t.matvec(w.w_r, xh), w.b_r));
  Tensor xrh = t.concat(x, t.hadamard(r, h));
  Tensor cand = t.tanh_act(t.add(t.matvec(w.w_h, xrh), w.b_h));
  // (1-z).h + z.cand, written as h + z.(cand - h)
  return t.add(h, t.hadamard(z, t.sub(cand, h)));
}

// --- finite differences -----------------------------------------------------------

std::vector<std::vector<double>> finite_diff_grad(
    const std::function<double(const ParamStore&)>& f, const ParamStore& at,
    double eps) {
  if (eps <= 0) throw ShapeError("finite_diff_grad: eps must be > 0");
  ParamStore work = at;
  std::vector<std::vector<double>> out(at.size());
  for (size_t p = 0; p < at.size(); ++p) {
    out[p].resize(at.at(p).values.size());
    for (size_t i = 0; i < out[p].size(); ++i) {
      double orig = work.at(p).values[i];
      work.at(p).values[i] = orig + eps;
      double fp = f(work);
      work.at(p).values[i] = orig - eps;
      double fm = f(work);
      work.at(p).values[i] = orig;
      out[p][i] = (fp - fm) / (2.0 * eps);
    }
  }
  return out;
}

}  // namespace hgnn
