#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "grokkit/nd/tensor.hpp"

namespace grokkit::nd {

/// A named, optionally trainable parameter tensor. `grad` stays empty until a
/// backward pass writes into it.
template <typename T>
struct ParamGroup {
  std::string name;
  Tensor2<T> value;
  Tensor2<T> grad;
  bool trainable = true;
  bool decay_exempt = false;

  bool has_grad() const noexcept { return !grad.empty(); }
  void zero_grad() { grad = Tensor2<T>(); }
};

enum class OpKind : std::uint8_t {
  Input,
  Param,
  MatMul,
  Relu,
  Add,
  Scale,
  GatherRows,
  ConcatCols,
  SliceCols,
  RowDot,
  SoftmaxRows,
  MulCol,
  Sum,
  SoftmaxXent,
  ExpLoss,
  LogisticLoss,
};

const char* op_name(OpKind k) noexcept;

/// Handle to a node in a Graph.
struct Var {
  std::uint32_t id = 0;
};

/// Define-by-run tape over Tensor2. Each forward pass builds a fresh graph;
/// nodes are appended in creation order, so reverse order is a valid
/// topological order for backward.
///
/// Parameters and inputs are referenced, not copied: the referenced tensors
/// must outlive the graph.
template <typename T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) noexcept = default;
  Graph& operator=(Graph&&) noexcept = default;

  /// Constant leaf referencing `t` (no gradient).
  Var input(const Tensor2<T>& t);
  /// Constant leaf owning `t`.
  Var constant(Tensor2<T> t);
  /// Leaf bound to a parameter group. Gradients flow into `p.grad` only if
  /// the group is trainable.
  Var param(ParamGroup<T>& p);

  Var matmul(Var a, Var b);
  Var relu(Var x);
  Var add(Var a, Var b);
  Var scale(Var x, T c);
  /// Rows of `table` selected by `rows`; backward scatters into the table.
  Var gather_rows(Var table, std::span<const int> rows);
  Var concat_cols(std::span<const Var> parts);
  Var slice_cols(Var x, std::size_t begin, std::size_t count);
  /// Per-row inner product: [n x d], [n x d] -> [n x 1].
  Var row_dot(Var a, Var b);
  Var softmax_rows(Var x);
  /// out(i, j) = x(i, j) * col(i, 0).
  Var mul_col(Var x, Var col);
  /// Sum of all entries -> [1 x 1].
  Var sum(Var x);

  /// Mean cross-entropy of row-wise softmax against class labels.
  Var softmax_xent(Var logits, std::span<const int> labels);
  /// Mean of exp(-y * s) over a column of scores; exponent clamped to +-80.
  Var exp_loss(Var scores, std::span<const T> labels);
  /// Mean of log(1 + exp(-y * s)) over a column of scores.
  Var logistic_loss(Var scores, std::span<const T> labels);

  const Tensor2<T>& value(Var v) const { return val(v.id); }
  /// Gradient of the last backward pass w.r.t. `v`; empty if none flowed.
  const Tensor2<T>& grad(Var v) const { return nodes_.at(v.id).grad; }
  OpKind kind(Var v) const { return nodes_.at(v.id).kind; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  /// The i-th operand of `v`.
  Var operand(Var v, std::size_t i) const { return Var{nodes_.at(v.id).inputs.at(i)}; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse-mode sweep from a [1 x 1] loss. Adds dL/dtheta into every
  /// trainable ParamGroup reached. Throws StateError if called twice.
  void backward(Var loss);
  /// Drop all nodes so the graph can be rebuilt.
  void reset();

 private:
  struct Node {
    OpKind kind = OpKind::Input;
    std::vector<std::uint32_t> inputs;
    Tensor2<T> own;
    const Tensor2<T>* ref = nullptr;
    Tensor2<T> grad;
    bool requires_grad = false;
    ParamGroup<T>* param = nullptr;
    std::function<void(Graph&, std::uint32_t)> backward;
  };

  const Tensor2<T>& val(std::uint32_t id) const {
    const Node& n = nodes_.at(id);
    return n.ref ? *n.ref : n.own;
  }
  Tensor2<T>& grad_buf(std::uint32_t id);
  Var push(OpKind kind, std::vector<std::uint32_t> inputs, Tensor2<T> value,
           std::function<void(Graph&, std::uint32_t)> backward);
  bool req(std::uint32_t id) const { return nodes_[id].requires_grad; }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

/// Scalar exponential loss exp(-y * yhat) with the exponent clamped to +-80.
double exp_loss(double y, double yhat);
/// Scalar logistic loss log(1 + exp(-y * yhat)), stable in both tails.
double logistic_loss(double y, double yhat);

}  // namespace grokkit::nd
