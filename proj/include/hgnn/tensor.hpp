#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "hgnn/errors.hpp"
#include "hgnn/param_store.hpp"
#include "hgnn/rng.hpp"

namespace hgnn {

class Tape;

// Handle to a node on a Tape. Cheap to copy; the tape owns the storage.
class Tensor {
public:
  Tensor() = default;

  const Shape& shape() const;
  const std::vector<double>& values() const;
  const std::vector<double>& grad() const;
  int64_t numel() const;
  int node_id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

  // Value of a 1-element tensor.
  double scalar() const;

private:
  friend class Tape;
  Tensor(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Recorded computation for one forward/backward pass. Define-by-run: every
// op evaluates eagerly and appends a node, so the node list is already a
// topological order and backward is a single reverse sweep.
//
// A tape is confined to one thread. Concurrent passes each get their own
// tape over a shared read-only ParamStore.
class Tape {
public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor leaf(Shape shape, std::vector<double> values, bool needs_grad = false);
  Tensor constant(Shape shape, std::vector<double> values);
  Tensor zeros(Shape shape);

  // Binds a named parameter as a gradient-tracked leaf. Binding the same
  // name twice returns the same node.
  Tensor param(const ParamStore& store, std::string_view name);

  Tensor matmul(Tensor a, Tensor b);     // [m,k]x[k,n] -> [m,n]
  Tensor matmul_nt(Tensor a, Tensor b);  // [m,k]x[n,k]^T -> [m,n]
  Tensor matvec(Tensor a, Tensor x);     // [m,k]x[k] -> [m]
  Tensor add(Tensor a, Tensor b);
  Tensor sub(Tensor a, Tensor b);
  Tensor hadamard(Tensor a, Tensor b);
  Tensor scale(Tensor a, double c);
  Tensor add_rowvec(Tensor a, Tensor b);  // [m,n] + [n] broadcast over rows
  Tensor mul_rowvec(Tensor a, Tensor b);  // [m,n] * [n] broadcast over rows
  Tensor sigmoid(Tensor a);
  Tensor tanh_act(Tensor a);
  Tensor relu(Tensor a);

  // Row-wise stabilized softmax. The optional mask (1 = keep, row-major,
  // same extent) zeroes masked entries exactly; a fully masked row is an
  // error naming the row.
  Tensor softmax_rows(Tensor logits);
  Tensor softmax_rows(Tensor logits, const std::vector<uint8_t>& mask);

  Tensor mean_pool_rows(Tensor a);  // [m,n] -> [n]
  Tensor max_pool_rows(Tensor a);   // [m,n] -> [n]; ties go to the lowest row
  Tensor concat(Tensor a, Tensor b);                    // [p]+[q] -> [p+q]
  Tensor concat_rows(const std::vector<Tensor>& parts); // stack [n] / [r,n]
  Tensor gather_rows(Tensor a, std::vector<int64_t> rows);
  Tensor row(Tensor a, int64_t i);  // [m,n] -> [n]
  Tensor sum_all(Tensor a);         // -> [1]
  Tensor reshape(Tensor a, Shape shape);  // same element count

  // Inverted dropout: zero with probability `rate`, survivors scaled by
  // 1/(1-rate). rate==0 is the identity.
  Tensor dropout(Tensor a, double rate, RngStream& rng);

  // Binary cross-entropy -[y ln c + (1-y) ln(1-c)] with c = clamp(y_hat,
  // 1e-7, 1-1e-7). Gradient is zero in the clamped region.
  Tensor bce(Tensor y_hat, double y);

  // Reverse sweep from a scalar loss. Gradients accumulate until
  // zero_grad(); unreachable bound parameters keep zero gradients.
  void backward(Tensor loss);
  void zero_grad();

  // Per-parameter gradients aligned with store order. Entries for
  // parameters never bound on this tape are empty.
  std::vector<std::vector<double>> param_grads() const;

  size_t size() const { return nodes_.size(); }

private:
  enum class Op : uint8_t {
    Leaf, Matmul, MatmulNT, Matvec, Add, Sub, Hadamard, Scale, AddRow,
    MulRow, Sigmoid, Tanh, Relu, SoftmaxRows, MeanPoolRows, MaxPoolRows,
    ConcatVec, ConcatRows, GatherRows, Row, SumAll, Reshape, Dropout, Bce,
  };

  struct Node {
    Op op;
    bool needs_grad = false;
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // sized lazily during backward
    std::vector<int> inputs;
    double c = 0.0;                // scale factor / bce label / dropout rate
    std::vector<int64_t> idx;      // gather targets / argmax / row offsets
    std::vector<uint8_t> mask;     // softmax keep-mask / dropout keep-mask
    int param_index = -1;
  };

  friend class Tensor;

  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  Tensor push(Node n);
  void ensure_grad(Node& n);
  void check_same_tape(Tensor t) const;
  Tensor softmax_rows_impl(Tensor logits, std::vector<uint8_t> mask);

  // deque keeps node references stable while later ops are recorded
  std::deque<Node> nodes_;
  const ParamStore* bound_store_ = nullptr;
  std::vector<int> param_node_;  // store index -> node id, -1 if unbound
};

// --- free-function sugar ----------------------------------------------------

inline Tensor matmul(Tensor a, Tensor b) { return a.tape()->matmul(a, b); }
inline Tensor matmul_nt(Tensor a, Tensor b) { return a.tape()->matmul_nt(a, b); }
inline Tensor matvec(Tensor a, Tensor x) { return a.tape()->matvec(a, x); }
inline Tensor add(Tensor a, Tensor b) { return a.tape()->add(a, b); }
inline Tensor sub(Tensor a, Tensor b) { return a.tape()->sub(a, b); }
inline Tensor hadamard(Tensor a, Tensor b) { return a.tape()->hadamard(a, b); }
inline Tensor scale(Tensor a, double c) { return a.tape()->scale(a, c); }
inline Tensor add_rowvec(Tensor a, Tensor b) { return a.tape()->add_rowvec(a, b); }
inline Tensor mul_rowvec(Tensor a, Tensor b) { return a.tape()->mul_rowvec(a, b); }
inline Tensor sigmoid(Tensor a) { return a.tape()->sigmoid(a); }
inline Tensor tanh_act(Tensor a) { return a.tape()->tanh_act(a); }
inline Tensor relu(Tensor a) { return a.tape()->relu(a); }
inline Tensor softmax_rows(Tensor a) { return a.tape()->softmax_rows(a); }
inline Tensor softmax_rows(Tensor a, const std::vector<uint8_t>& m) {
  return a.tape()->softmax_rows(a, m);
}
inline Tensor mean_pool_rows(Tensor a) { return a.tape()->mean_pool_rows(a); }
inline Tensor max_pool_rows(Tensor a) { return a.tape()->max_pool_rows(a); }
inline Tensor concat(Tensor a, Tensor b) { return a.tape()->concat(a, b); }
inline Tensor gather_rows(Tensor a, std::vector<int64_t> rows) {
  return a.tape()->gather_rows(a, std::move(rows));
}
inline Tensor row(Tensor a, int64_t i) { return a.tape()->row(a, i); }
inline Tensor sum_all(Tensor a) { return a.tape()->sum_all(a); }
inline Tensor reshape(Tensor a, Shape s) { return a.tape()->reshape(a, std::move(s)); }

// --- GRU cell ----------------------------------------------------------------

// Gate weights act on [x; h] (input first). w_* are [d, 2d], b_* are [d].
struct GruWeights {
  Tensor w_z, w_r, w_h;
  Tensor b_z, b_r, b_h;
};

GruWeights bind_gru(Tape& tape, const ParamStore& store,
                    const std::string& prefix);

// One GRU cell update:
//   z = sigmoid(Wz [x;h] + bz)
//   r = sigmoid(Wr [x;h] + br)
//   h~ = tanh(Wh [x; r.h] + bh)
//   out = (1-z).h + z.h~
// With all-zero weights this reduces exactly to 0.5*h.
Tensor gru_step(Tensor h, Tensor x, const GruWeights& w);

// --- finite-difference oracle -------------------------------------------------

// Central-difference gradient estimate of f over every scalar in `at`,
// aligned with store order. Test oracle; independent of the tape.
std::vector<std::vector<double>> finite_diff_grad(
    const std::function<double(const ParamStore&)>& f, const ParamStore& at,
    double eps = 1e-5);

}  // namespace hgnn
