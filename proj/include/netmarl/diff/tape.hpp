#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "netmarl/diff/param_store.hpp"

namespace netmarl::diff {

/// Handle to a vector recorded on a Tape.
struct Var {
  int index = -1;
  bool valid() const { return index >= 0; }
};

/// Append-only record of vector operations. Values live in one arena;
/// backward() walks the record in reverse and accumulates parameter gradients
/// into the ParamStore. Single-threaded.
class Tape {
 public:
  explicit Tape(ParamStore* store) : store_(store) {}

  ParamStore& store() { return *store_; }

  Var constant(std::span<const double> values);
  Var zeros(int n);
  /// Copy of `v` with no gradient path (truncation point).
  Var detach(Var v) { return constant(value(v)); }

  std::span<const double> value(Var v) const;
  /// Gradient of the last backward() target w.r.t. `v`.
  std::span<const double> grad(Var v) const;
  int size(Var v) const;
  bool requires_grad(Var v) const;

  // Dense algebra. Parameter matrices are row-major [rows x cols].
  Var matvec(ParamId w, Var x);
  Var affine(ParamId w, ParamId b, Var x);
  Var affine2(ParamId w1, Var x1, ParamId w2, Var x2, ParamId b);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var dot(Var a, Var b);
  Var sum(Var a);
  Var slice(Var a, int offset, int n);

  // Activations.
  Var relu(Var a);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var softmax(Var a);
  Var log_softmax(Var a);
  /// Scalar element `index` of `a`.
  Var pick(Var a, int index);

  /// Fused LSTM cell. `gates` holds pre-activations [i, f, g, o] (4H); returns
  /// [h', c'] (2H).
  Var lstm_cell(Var gates, Var c);

  /// d independent two-class Gumbel-Softmax samples. `logits` holds d pairs
  /// (class 0, class 1); `noise` holds the matching 2d Gumbel draws. Logits are
  /// clamped to [-30, 30]. With `hard`, the forward value is the argmax bit and
  /// the backward pass uses the relaxed sample (straight-through).
  Var gumbel_binary(Var logits, std::span<const double> noise, double tau, bool hard);
  /// Relaxed class-1 probabilities of a gumbel_binary node.
  std::span<const double> relaxed(Var gumbel_node) const;

  /// q-bar = sum_j softmax_j(q . m_j) m_j. Throws EmptyInbox.
  Var attention(Var query, std::span<const Var> messages);
  /// Attention weights of an attention node.
  std::span<const double> attention_weights(Var attention_node) const;

  /// Scalar sum_i weights[i] * scalars[i].
  Var weighted_sum(std::span<const Var> scalars, std::span<const double> weights);

  /// Reverse pass from scalar `target`; gradients of parameters are added to
  /// the store and the store is marked as holding gradients.
  void backward(Var target);

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t value_count() const { return vals_.size(); }
  void clear();

 private:
  enum class Op : std::uint8_t {
    Constant, MatVec, Affine, Affine2, Add, Mul, Scale, Dot, Sum, Slice,
    Relu, Sigmoid, Tanh, Softmax, LogSoftmax, Pick, LstmCell, Gumbel,
    Attention, WeightedSum
  };
  struct Node {
    Op op = Op::Constant;
    bool needs_grad = false;
    int a = -1, b = -1;
    int p0 = -1, p1 = -1, p2 = -1;
    std::uint32_t off = 0, n = 0;
    std::uint32_t aux_off = 0, aux_n = 0;    // double side data
    std::uint32_t iaux_off = 0, iaux_n = 0;  // int side data
    double s = 0.0;
    int k = 0;
  };

  Var push(Node node, int n);
  double* val(int node) { return vals_.data() + nodes_[static_cast<std::size_t>(node)].off; }
  const double* val(int node) const {
    return vals_.data() + nodes_[static_cast<std::size_t>(node)].off;
  }
  double* grd(int node) { return grads_.data() + nodes_[static_cast<std::size_t>(node)].off; }
  const Node& node(Var v) const;
  bool ng(int node) const { return nodes_[static_cast<std::size_t>(node)].needs_grad; }
  const ParamStore::Param& param(int id) const { return store_->params()[static_cast<std::size_t>(id)]; }
  void check_param(ParamId w, int cols, const char* what) const;

  ParamStore* store_;
  std::vector<Node> nodes_;
  std::vector<double> vals_;
  std::vector<double> grads_;
  std::vector<double> aux_;
  std::vector<int> iaux_;
};

}  // namespace netmarl::diff
