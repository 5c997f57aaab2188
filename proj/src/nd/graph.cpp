#include "grokkit/nd/graph.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "grokkit/nd/kernels.hpp"

namespace grokkit::nd {

using kernels::Trans;

const char* op_name(OpKind k) noexcept {
  switch (k) {
    case OpKind::Input: return "input";
    case OpKind::Param: return "param";
    case OpKind::MatMul: return "matmul";
    case OpKind::Relu: return "relu";
    case OpKind::Add: return "add";
    case OpKind::Scale: return "scale";
    case OpKind::GatherRows: return "gather_rows";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::SliceCols: return "slice_cols";
    case OpKind::RowDot: return "row_dot";
    case OpKind::SoftmaxRows: return "softmax_rows";
    case OpKind::MulCol: return "mul_col";
    case OpKind::Sum: return "sum";
    case OpKind::SoftmaxXent: return "softmax_xent";
    case OpKind::ExpLoss: return "exp_loss";
    case OpKind::LogisticLoss: return "logistic_loss";
  }
  return "?";
}

namespace {

constexpr double kExpClamp = 80.0;

template <typename T>
void check_pm1(std::span<const T> labels, const char* what) {
  for (T y : labels) {
    if (y != T(1) && y != T(-1)) {
      throw ArgumentError(std::string(what) + ": labels must be +1 or -1");
    }
  }
}

template <typename T>
T stable_softplus(T z) {
  // log(1 + exp(z))
  return std::max(z, T(0)) + std::log1p(std::exp(-std::abs(z)));
}

template <typename T>
T sigmoid(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

}  // namespace

double exp_loss(double y, double yhat) {
  return std::exp(std::clamp(-y * yhat, -kExpClamp, kExpClamp));
}

double logistic_loss(double y, double yhat) { return stable_softplus(-y * yhat); }

template <typename T>
Tensor2<T>& Graph<T>::grad_buf(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) {
    const Tensor2<T>& v = val(id);
    n.grad = Tensor2<T>(v.rows(), v.cols());
  }
  return n.grad;
}

template <typename T>
Var Graph<T>::push(OpKind kind, std::vector<std::uint32_t> inputs, Tensor2<T> value,
                   std::function<void(Graph&, std::uint32_t)> backward) {
  if (backward_done_) throw StateError("graph: cannot extend a graph after backward; call reset()");
  Node n;
  n.kind = kind;
  n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                [&](std::uint32_t i) { return nodes_[i].requires_grad; });
  n.inputs = std::move(inputs);
  n.own = std::move(value);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Graph<T>::input(const Tensor2<T>& t) {
  Node n;
  n.kind = OpKind::Input;
  n.ref = &t;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Graph<T>::constant(Tensor2<T> t) {
  Node n;
  n.kind = OpKind::Input;
  n.own = std::move(t);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Graph<T>::param(ParamGroup<T>& p) {
  Node n;
  n.kind = OpKind::Param;
  n.ref = &p.value;
  n.param = &p;
  n.requires_grad = p.trainable;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Graph<T>::matmul(Var a, Var b) {
  Tensor2<T> out;
  kernels::gemm(Trans::No, Trans::No, val(a.id), val(b.id), out);
  return push(OpKind::MatMul, {a.id, b.id}, std::move(out), [](Graph& g, std::uint32_t self) {
    const Node& n = g.nodes_[self];
    const std::uint32_t ia = n.inputs[0], ib = n.inputs[1];
    if (g.req(ia)) kernels::gemm(Trans::No, Trans::Yes, n.grad, g.val(ib), g.grad_buf(ia), true);
    if (g.req(ib)) kernels::gemm(Trans::Yes, Trans::No, g.val(ia), n.grad, g.grad_buf(ib), true);
  });
}

template <typename T>
Var Graph<T>::relu(Var x) {
  const Tensor2<T>& xv = val(x.id);
  Tensor2<T> out(xv.rows(), xv.cols());
  const auto xs = xv.data();
  auto os = out.data();
  for (std::size_t i = 0; i < xs.size(); ++i) os[i] = xs[i] > T(0) ? xs[i] : T(0);
  return push(OpKind::Relu, {x.id}, std::move(out), [](Graph& g, std::uint32_t self) {
    const Node& n = g.nodes_[self];
    const std::uint32_t ix = n.inputs[0];
    const auto xs = g.val(ix).data();
    const auto gs = n.grad.data();
    auto dx = g.grad_buf(ix).data();
    // Subgradient at 0 is 0.
    for (std::size_t i = 0; i < xs.size(); ++i)
      if (xs[i] > T(0)) dx[i] += gs[i];
  });
}

template <typename T>
Var Graph<T>::add(Var a, Var b) {
  const Tensor2<T>& av = val(a.id);
  const Tensor2<T>& bv = val(b.id);
  require_same_shape(av, bv, "add");
  Tensor2<T> out = av;
  auto os = out.data();
  const auto bs = bv.data();
  for (std::size_t i = 0; i < os.size(); ++i) os[i] += bs[i];
  return push(OpKind::Add, {a.id, b.id}, std::move(out), [](Graph& g, std::uint32_t self) {
    const Node& n = g.nodes_[self];
    for (std::uint32_t in : n.inputs) {
      if (!g.req(in)) continue;
      auto d = g.grad_buf(in).data();
      const auto gs = n.grad.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gs[i];
    }
  });
}

template <typename T>
Var Graph<T>::scale(Var x, T c) {
  Tensor2<T> out = val(x.id);
  for (T& v : out.data()) v *= c;
  return push(OpKind::Scale, {x.id}, std::move(out), [c](Graph& g, std::uint32_t self) {
    const Node& n = g.nodes_[self];
    auto d = g.grad_buf(n.inputs[0]).data();
    const auto gs = n.grad.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += c * gs[i];
  });
}

template <typename T>
Var Graph<T>::gather_rows(Var table, std::span<const int> rows) {
  const Tensor2<T>& tv = val(table.id);
  const std::size_t d = tv.cols();
  Tensor2<T> out(rows.size(), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int r = rows[i];
    if (r < 0 || static_cast<std::size_t>(r) >= tv.rows()) {
      throw IndexError("gather_rows: row " + std::to_string(r) + " outside table " + tv.shape());
    }
    std::copy_n(tv.row(static_cast<std::size_t>(r)).begin(), d, out.row(i).begin());
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return push(OpKind::GatherRows, {table.id}, std::move(out),
              [idx = std::move(idx)](Graph& g, std::uint32_t self) {
                const Node& n = g.nodes_[self];
                Tensor2<T>& dt = g.grad_buf(n.inputs[0]);
                for (std::size_t i = 0; i < idx.size(); ++i) {
                  auto dst = dt.row(static_cast<std::size_t>(idx[i]));
                  const auto src = n.grad.row(i);
                  for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
                }
              });
}

template <typename T>
Var Graph<T>::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("concat_cols: no inputs");
  const std::size_t rows = val(parts[0].id).rows();
  std::size_t cols = 0;
  std::vector<std::uint32_t> ids;
  for (Var p : parts) {
    const Tensor2<T>& v = val(p.id);
    if (v.rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + val(parts[0].id).shape() + " vs " +
                           v.shape());
    }
    cols += v.cols();
    ids.push_back(p.id);
  }
  Tensor2<T> out(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor2<T>& v = val(p.id);
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(v.row(i).begin(), v.cols(), out.row(i).begin() + static_cast<std::ptrdiff_t>(off));
    off += v.cols();
  }
  return push(OpKind::ConcatCols, std::move(ids), std::move(out), [](Graph& g, std::uint32_t self) {
    const Node& n = g.nodes_[self];
    std::size_t off = 0;
    for (std::uint32_t in : n.inputs) {
      const std::size_t w = g.val(in).cols();
      if (g.req(in)) {
        Tensor2<T>& d = g.grad_buf(in);
        for (std::size_t i = 0; i < d.rows(); ++i) {
          const auto src = n.grad.row(i);
          auto dst = d.row(i);
          for (std::size_t j = 0; j < w; ++j) dst[j] += src[off + j];
        }
      }
      off += w;
    }
  });
}

template <typename T>
Var Graph<T>::slice_cols(Var x, std::size_t begin, std::size_t count) {
  const Tensor2<T>& xv = val(x.id);
  if (begin + count > xv.cols()) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + xv.shape());
  }
  Tensor2<T> out(xv.rows(), count);
  for (std::size_t i = 0; i < xv.rows(); ++i)
    std::copy_n(xv.row(i).begin() + static_cast<std::ptrdiff_t>(begin), count, out.row(i).begin());
  return push(OpKind::SliceCols, {x.id}, std::move(out), [begin](Graph& g, std::uint32_t self) {
    const Node& n = g.nodes_[self];
    Tensor2<T>& d = g.grad_buf(n.inputs[0]);
    for (std::size_t i = 0; i < d.rows(); ++i) {
      const auto src = n.grad.row(i);
      auto dst = d.row(i);
      for (std::size_t j = 0; j < src.size(); ++j) dst[begin + j] += src[j];
    }
  });
}

template <typename T>
Var Graph<T>::row_dot(Var a, Var b) {
  const Tensor2<T>& av = val(a.id);
  const Tensor2<T>& bv = val(b.id);
  require_same_shape(av, bv, "row_dot");
  Tensor2<T> out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    T s = T(0);
    for (std::size_t j = 0; j < av.cols(); ++j) s += av(i, j) * bv(i, j);
    out(i, 0) = s;
  }
  return push(OpKind::RowDot, {a.id, b.id}, std::move(out), [](Graph& g, std::uint32_t self) {
    const Node& n = g.nodes_[self];
    const std::uint32_t ia = n.inputs[0], ib = n.inputs[1];
    const Tensor2<T>& av = g.val(ia);
    const Tensor2<T>& bv = g.val(ib);
    if (g.req(ia)) {
      Tensor2<T>& d = g.grad_buf(ia);
      for (std::size_t i = 0; i < d.rows(); ++i)
        for (std::size_t j = 0; j < d.cols(); ++j) d(i, j) += n.grad(i, 0) * bv(i, j);
    }
    if (g.req(ib)) {
      Tensor2<T>& d = g.grad_buf(ib);
      for (std::size_t i = 0; i < d.rows(); ++i)
        for (std::size_t j = 0; j < d.cols(); ++j) d(i, j) += n.grad(i, 0) * av(i, j);
    }
  });
}

template <typename T>
Var Graph<T>::softmax_rows(Var x) {
  Tensor2<T> out;
  kernels::softmax_rows(val(x.id), out);
  return push(OpKind::SoftmaxRows, {x.id}, std::move(out), [](Graph& g, std::uint32_t self) {
    const Node& n = g.nodes_[self];
    const Tensor2<T>& s = n.own;
    Tensor2<T>& d = g.grad_buf(n.inputs[0]);
    for (std::size_t i = 0; i < s.rows(); ++i) {
      T dot = T(0);
      for (std::size_t j = 0; j < s.cols(); ++j) dot += n.grad(i, j) * s(i, j);
      for (std::size_t j = 0; j < s.cols(); ++j) d(i, j) += s(i, j) * (n.grad(i, j) - dot);
    }
  });
}

template <typename T>
Var Graph<T>::mul_col(Var x, Var col) {
  const Tensor2<T>& xv = val(x.id);
  const Tensor2<T>& cv = val(col.id);
  if (cv.cols() != 1 || cv.rows() != xv.rows()) {
    throw DimensionError("mul_col: column " + cv.shape() + " incompatible with " + xv.shape());
  }
  Tensor2<T> out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (T& v : out.row(i)) v *= cv(i, 0);
  return push(OpKind::MulCol, {x.id, col.id}, std::move(out), [](Graph& g, std::uint32_t self) {
    const Node& n = g.nodes_[self];
    const std::uint32_t ix = n.inputs[0], ic = n.inputs[1];
    const Tensor2<T>& xv = g.val(ix);
    const Tensor2<T>& cv = g.val(ic);
    if (g.req(ix)) {
      Tensor2<T>& d = g.grad_buf(ix);
      for (std::size_t i = 0; i < d.rows(); ++i)
        for (std::size_t j = 0; j < d.cols(); ++j) d(i, j) += n.grad(i, j) * cv(i, 0);
    }
    if (g.req(ic)) {
      Tensor2<T>& d = g.grad_buf(ic);
      for (std::size_t i = 0; i < xv.rows(); ++i) {
        T s = T(0);
        for (std::size_t j = 0; j < xv.cols(); ++j) s += n.grad(i, j) * xv(i, j);
        d(i, 0) += s;
      }
    }
  });
}

template <typename T>
Var Graph<T>::sum(Var x) {
  T s = T(0);
  for (T v : val(x.id).data()) s += v;
  return push(OpKind::Sum, {x.id}, Tensor2<T>(1, 1, s), [](Graph& g, std::uint32_t self) {
    const Node& n = g.nodes_[self];
    const T gv = n.grad(0, 0);
    for (T& d : g.grad_buf(n.inputs[0]).data()) d += gv;
  });
}

template <typename T>
Var Graph<T>::softmax_xent(Var logits, std::span<const int> labels) {
  const Tensor2<T>& lv = val(logits.id);
  if (labels.size() != lv.rows()) {
    throw DimensionError("softmax_xent: " + std::to_string(labels.size()) + " labels for logits " +
                         lv.shape());
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= lv.cols()) {
      throw IndexError("softmax_xent: label " + std::to_string(y) + " outside [0, " +
                       std::to_string(lv.cols()) + ")");
    }
  }
  // Keep the softmax for backward in the closure.
  Tensor2<T> probs;
  kernels::softmax_rows(lv, probs);
  double total = 0.0;
  for (std::size_t i = 0; i < lv.rows(); ++i) {
    auto row = lv.row(i);
    const T mx = *std::max_element(row.begin(), row.end());
    T s = T(0);
    for (T v : row) s += std::exp(v - mx);
    total += static_cast<double>(std::log(s) + mx - row[static_cast<std::size_t>(labels[i])]);
  }
  const T mean = lv.rows() ? static_cast<T>(total / static_cast<double>(lv.rows())) : T(0);
  std::vector<int> ys(labels.begin(), labels.end());
  return push(OpKind::SoftmaxXent, {logits.id}, Tensor2<T>(1, 1, mean),
              [probs = std::move(probs), ys = std::move(ys)](Graph& g, std::uint32_t self) {
                const Node& n = g.nodes_[self];
                Tensor2<T>& d = g.grad_buf(n.inputs[0]);
                const T scale = n.grad(0, 0) / static_cast<T>(probs.rows());
                for (std::size_t i = 0; i < probs.rows(); ++i) {
                  for (std::size_t j = 0; j < probs.cols(); ++j) d(i, j) += scale * probs(i, j);
                  d(i, static_cast<std::size_t>(ys[i])) -= scale;
                }
              });
}

template <typename T>
Var Graph<T>::exp_loss(Var scores, std::span<const T> labels) {
  const Tensor2<T>& sv = val(scores.id);
  if (sv.cols() != 1 || sv.rows() != labels.size()) {
    throw DimensionError("exp_loss: scores " + sv.shape() + " vs " + std::to_string(labels.size()) +
                         " labels");
  }
  check_pm1(labels, "exp_loss");
  const T clamp = static_cast<T>(kExpClamp);
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    total += static_cast<double>(std::exp(std::clamp(-labels[i] * sv(i, 0), -clamp, clamp)));
  const T mean = labels.empty() ? T(0) : static_cast<T>(total / static_cast<double>(labels.size()));
  std::vector<T> ys(labels.begin(), labels.end());
  return push(OpKind::ExpLoss, {scores.id}, Tensor2<T>(1, 1, mean),
              [ys = std::move(ys), clamp](Graph& g, std::uint32_t self) {
                const Node& n = g.nodes_[self];
                const Tensor2<T>& sv = g.val(n.inputs[0]);
                Tensor2<T>& d = g.grad_buf(n.inputs[0]);
                const T scale = n.grad(0, 0) / static_cast<T>(ys.size());
                for (std::size_t i = 0; i < ys.size(); ++i)
                  d(i, 0) += scale * -ys[i] * std::exp(std::clamp(-ys[i] * sv(i, 0), -clamp, clamp));
              });
}

template <typename T>
Var Graph<T>::logistic_loss(Var scores, std::span<const T> labels) {
  const Tensor2<T>& sv = val(scores.id);
  if (sv.cols() != 1 || sv.rows() != labels.size()) {
    throw DimensionError("logistic_loss: scores " + sv.shape() + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  check_pm1(labels, "logistic_loss");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    total += static_cast<double>(stable_softplus(-labels[i] * sv(i, 0)));
  const T mean = labels.empty() ? T(0) : static_cast<T>(total / static_cast<double>(labels.size()));
  std::vector<T> ys(labels.begin(), labels.end());
  return push(OpKind::LogisticLoss, {scores.id}, Tensor2<T>(1, 1, mean),
              [ys = std::move(ys)](Graph& g, std::uint32_t self) {
                const Node& n = g.nodes_[self];
                const Tensor2<T>& sv = g.val(n.inputs[0]);
                Tensor2<T>& d = g.grad_buf(n.inputs[0]);
                const T scale = n.grad(0, 0) / static_cast<T>(ys.size());
                for (std::size_t i = 0; i < ys.size(); ++i)
                  d(i, 0) += scale * -ys[i] * sigmoid(-ys[i] * sv(i, 0));
              });
}

template <typename T>
void Graph<T>::backward(Var loss) {
  if (backward_done_) throw StateError("backward: already called on this graph; call reset()");
  const Tensor2<T>& lv = val(loss.id);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ArgumentError("backward: loss must be [1x1], got " + lv.shape());
  }
  backward_done_ = true;
  if (!nodes_[loss.id].requires_grad) return;
  grad_buf(loss.id).fill(T(1));
  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, id);
    if (n.kind == OpKind::Param && n.param != nullptr && n.param->trainable) {
      ParamGroup<T>& p = *n.param;
      if (p.grad.empty()) {
        p.grad = n.grad;
      } else {
        auto dst = p.grad.data();
        const auto src = n.grad.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
    }
  }
}

template <typename T>
void Graph<T>::reset() {
  nodes_.clear();
  backward_done_ = false;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace grokkit::nd
