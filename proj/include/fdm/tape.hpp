// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fdm/param_store.hpp"
#include "fdm/tensor.hpp"

namespace fdm {

/// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Parameters of one network bound to a tape, looked up by name.
class Bound {
 public:
  void set(const std::string& name, Var v) { vars_[name] = v; }
  Var operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw ConfigError("parameter '" + name + "' not bound");
    return it->second;
  }

 private:
  std::map<std::string, Var> vars_;
};

/// Reverse-mode tape over a fixed op set. Nodes are appended in evaluation
/// order, so a reverse sweep over ids is a valid topological order.
class Tape {
 public:
  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t num_nodes() const { return nodes_.size(); }

  Var constant(Tensor t) { return push("constant", std::move(t), false, {}, nullptr); }

  /// Leaf whose gradient is accumulated into `sink` by backward().
  Var leaf(const Tensor& t, Tensor* sink) { return push("parameter", t, true, {}, nullptr, sink); }

  Bound bind(ParamStore& ps) {
    Bound b;
    for (auto& e : ps.entries()) b.set(e.name, leaf(e.value, &e.grad));
    return b;
  }

  /// Binds parameters as constants: nothing upstream of them receives gradient.
  Bound bind_frozen(const ParamStore& ps) {
    Bound b;
    for (const auto& e : ps.entries()) b.set(e.name, constant(e.value));
    return b;
  }

  // ---- ops ----------------------------------------------------------------

  Var matmul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.cols() != B.rows())
      throw ConfigError("matmul: inner dimension mismatch " + shape_str(A.shape()) + " x " +
                        shape_str(B.shape()));
    Tensor C(A.rows(), B.cols());
    if (C.size()) map(C).noalias() = cmap(A) * cmap(B);
    return push("matmul", std::move(C), any_grad(a, b), {a.id, b.id}, [](Tape& t, Node& n) {
      const Tensor& G = n.grad;
      Var a{n.inputs[0]}, b{n.inputs[1]};
      if (t.requires_grad(a)) map(t.grad_buf(a)).noalias() += cmap(G) * cmap(t.value(b)).transpose();
      if (t.requires_grad(b)) map(t.grad_buf(b)).noalias() += cmap(t.value(a)).transpose() * cmap(G);
    });
  }

  /// a * b^T, with b stored as (out x in).
  Var matmul_nt(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.cols() != B.cols())
      throw ConfigError("matmul_nt: inner dimension mismatch " + shape_str(A.shape()) + " x " +
                        shape_str(B.shape()) + "^T");
    Tensor C(A.rows(), B.rows());
    if (C.size()) map(C).noalias() = cmap(A) * cmap(B).transpose();
    return push("matmul_nt", std::move(C), any_grad(a, b), {a.id, b.id}, [](Tape& t, Node& n) {
      const Tensor& G = n.grad;
      Var a{n.inputs[0]}, b{n.inputs[1]};
      if (t.requires_grad(a)) map(t.grad_buf(a)).noalias() += cmap(G) * cmap(t.value(b));
      if (t.requires_grad(b)) map(t.grad_buf(b)).noalias() += cmap(G).transpose() * cmap(t.value(a));
    });
  }

  /// Elementwise a + b; b may also be a 1 x cols row broadcast over rows.
  Var add(Var a, Var b) { return add_scaled(a, b, 1.0, "add"); }

  /// Elementwise a - b, same broadcasting as add.
  Var sub(Var a, Var b) { return add_scaled(a, b, -1.0, "sub"); }

  /// Elementwise a * b; b may also be an n x 1 column broadcast over columns.
  Var mul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    const bool col = B.rows() == A.rows() && B.cols() == 1 && A.cols() != 1;
    if (!col) require_same_shape(A, B, "mul");
    Tensor C(A.shape());
    const std::size_t cols = A.cols();
    for (std::size_t i = 0; i < A.size(); ++i) C[i] = A[i] * B[col ? i / cols : i];
    return push("mul", std::move(C), any_grad(a, b), {a.id, b.id}, [col, cols](Tape& t, Node& n) {
      const Tensor& G = n.grad;
      Var a{n.inputs[0]}, b{n.inputs[1]};
      const Tensor& A = t.value(a);
      const Tensor& B = t.value(b);
      if (t.requires_grad(a)) {
        Tensor& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < G.size(); ++i) ga[i] += G[i] * B[col ? i / cols : i];
      }
      if (t.requires_grad(b)) {
        Tensor& gb = t.grad_buf(b);
        for (std::size_t i = 0; i < G.size(); ++i) gb[col ? i / cols : i] += G[i] * A[i];
      }
    });
  }

  Var scale(Var a, double c) {
    Tensor C = value(a);
    for (auto& v : C.values()) v *= c;
    return push("scale", std::move(C), requires_grad(a), {a.id}, [c](Tape& t, Node& n) {
      Tensor& ga = t.grad_buf(Var{n.inputs[0]});
      for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += c * n.grad[i];
    });
  }

  Var tanh(Var a) {
    Tensor C = value(a);
    for (auto& v : C.values()) v = std::tanh(v);
    return push("tanh", std::move(C), requires_grad(a), {a.id}, [](Tape& t, Node& n) {
      Tensor& ga = t.grad_buf(Var{n.inputs[0]});
      for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] * (1.0 - n.value[i] * n.value[i]);
    });
  }

  /// Smooth ReLU: log(1 + e^x).
  Var softplus(Var a) {
    Tensor C = value(a);
    for (auto& v : C.values()) v = v > 30.0 ? v : std::log1p(std::exp(v));
    return push("softplus", std::move(C), requires_grad(a), {a.id}, [](Tape& t, Node& n) {
      Var in{n.inputs[0]};
      const Tensor& x = t.value(in);
      Tensor& ga = t.grad_buf(in);
      for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] / (1.0 + std::exp(-x[i]));
    });
  }

  /// Non-smooth; the subgradient at 0 is taken as 0.
  Var relu(Var a) {
    Tensor C = value(a);
    for (auto& v : C.values()) v = v > 0.0 ? v : 0.0;
    return push("relu", std::move(C), requires_grad(a), {a.id}, [](Tape& t, Node& n) {
      Var in{n.inputs[0]};
      const Tensor& x = t.value(in);
      Tensor& ga = t.grad_buf(in);
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        if (x[i] > 0.0) ga[i] += n.grad[i];
    });
  }

  Var square(Var a) {
    Tensor C = value(a);
    for (auto& v : C.values()) v = v * v;
    return push("square", std::move(C), requires_grad(a), {a.id}, [](Tape& t, Node& n) {
      Var in{n.inputs[0]};
      const Tensor& x = t.value(in);
      Tensor& ga = t.grad_buf(in);
      for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += 2.0 * x[i] * n.grad[i];
    });
  }

  /// Mean over all entries, as a 1 x 1 tensor.
  Var mean(Var a) {
    const Tensor& A = value(a);
    if (A.size() == 0) throw ConfigError("mean of empty tensor");
    double s = 0.0;
    for (double v : A.values()) s += v;
    const double inv = 1.0 / static_cast<double>(A.size());
    return push("mean", Tensor::scalar(s * inv), requires_grad(a), {a.id}, [inv](Tape& t, Node& n) {
      Tensor& ga = t.grad_buf(Var{n.inputs[0]});
      const double g = n.grad[0] * inv;
      for (auto& v : ga.values()) v += g;
    });
  }

  /// Per-row sum, n x 1.
  Var sum_cols(Var a) {
    const Tensor& A = value(a);
    Tensor C(A.rows(), 1);
    for (std::size_t r = 0; r < A.rows(); ++r)
      for (double v : A.row(r)) C[r] += v;
    return push("sum_cols", std::move(C), requires_grad(a), {a.id}, [](Tape& t, Node& n) {
      Tensor& ga = t.grad_buf(Var{n.inputs[0]});
      for (std::size_t r = 0; r < ga.rows(); ++r)
        for (auto& v : ga.row(r)) v += n.grad[r];
    });
  }

  Var concat_cols(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.rows() != B.rows()) throw ConfigError("concat_cols: row count mismatch");
    const std::size_t ca = A.cols(), cb = B.cols();
    Tensor C(A.rows(), ca + cb);
    for (std::size_t r = 0; r < A.rows(); ++r) {
      std::copy(A.row(r).begin(), A.row(r).end(), C.row(r).begin());
      std::copy(B.row(r).begin(), B.row(r).end(), C.row(r).begin() + static_cast<std::ptrdiff_t>(ca));
    }
    return push("concat_cols", std::move(C), any_grad(a, b), {a.id, b.id}, [ca, cb](Tape& t, Node& n) {
      Var a{n.inputs[0]}, b{n.inputs[1]};
      for (std::size_t r = 0; r < n.grad.rows(); ++r) {
        auto g = n.grad.row(r);
        if (t.requires_grad(a)) {
          auto ga = t.grad_buf(a).row(r);
          for (std::size_t k = 0; k < ca; ++k) ga[k] += g[k];
        }
        if (t.requires_grad(b)) {
          auto gb = t.grad_buf(b).row(r);
          for (std::size_t k = 0; k < cb; ++k) gb[k] += g[ca + k];
        }
      }
    });
  }

  /// Columns [begin, end).
  Var slice_cols(Var a, std::size_t begin, std::size_t end) {
    const Tensor& A = value(a);
    if (begin > end || end > A.cols()) throw ConfigError("slice_cols: range out of bounds");
    Tensor C(A.rows(), end - begin);
    for (std::size_t r = 0; r < A.rows(); ++r)
      std::copy(A.row(r).begin() + static_cast<std::ptrdiff_t>(begin),
                A.row(r).begin() + static_cast<std::ptrdiff_t>(end), C.row(r).begin());
    return push("slice_cols", std::move(C), requires_grad(a), {a.id}, [begin](Tape& t, Node& n) {
      Tensor& ga = t.grad_buf(Var{n.inputs[0]});
      for (std::size_t r = 0; r < n.grad.rows(); ++r) {
        auto g = n.grad.row(r);
        auto dst = ga.row(r);
        for (std::size_t k = 0; k < g.size(); ++k) dst[begin + k] += g[k];
      }
    });
  }

  /// Mean over rows of the squared Euclidean row norm; the reduction used
  /// by every loss in this library.
  Var mean_sqnorm(Var diff) {
    const double cols = static_cast<double>(value(diff).cols());
    return scale(mean(square(diff)), cols);
  }

  // ---- reverse sweep --------------------------------------------------------

  /// Seeds d(loss)/d(loss) = 1 and accumulates into every parameter sink.
  void backward(Var loss) {
    if (value(loss).size() != 1) throw ConfigError("backward: loss must be a scalar");
    if (!requires_grad(loss)) return;
    grad_buf(loss)[0] += 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, n);
      if (n.sink) {
        for (std::size_t k = 0; k < n.grad.size(); ++k) (*n.sink)[k] += n.grad[k];
      }
    }
  }

  /// Name and id of the first node holding a non-finite value, if any.
  std::string first_non_finite() const {
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (!nodes_[i].value.all_finite()) return "op '" + nodes_[i].op + "' (node " + std::to_string(i) + ")";
    return {};
  }

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    std::function<void(Tape&, Node&)> backward;
    Tensor* sink = nullptr;
  };

  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  static Eigen::Map<RowMat> map(Tensor& t) {
    return {t.raw().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
  }
  static Eigen::Map<const RowMat> cmap(const Tensor& t) {
    return {t.raw().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
  }

  bool any_grad(Var a, Var b) const { return requires_grad(a) || requires_grad(b); }

  Tensor& grad_buf(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape(), 0.0);
    return n.grad;
  }

  Var add_scaled(Var a, Var b, double sign, const char* op) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    const bool row = B.rows() == 1 && A.rows() != 1 && B.cols() == A.cols();
    if (!row) require_same_shape(A, B, op);
    Tensor C = A;
    const std::size_t cols = A.cols();
    for (std::size_t i = 0; i < C.size(); ++i) C[i] += sign * B[row ? i % cols : i];
    return push(op, std::move(C), any_grad(a, b), {a.id, b.id}, [row, cols, sign](Tape& t, Node& n) {
      Var a{n.inputs[0]}, b{n.inputs[1]};
      if (t.requires_grad(a)) {
        Tensor& ga = t.grad_buf(a);
        for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i];
      }
      if (t.requires_grad(b)) {
        Tensor& gb = t.grad_buf(b);
        for (std::size_t i = 0; i < n.grad.size(); ++i) gb[row ? i % cols : i] += sign * n.grad[i];
      }
    });
  }

  Var push(std::string op, Tensor value, bool requires_grad, std::vector<std::size_t> inputs,
           std::function<void(Tape&, Node&)> backward, Tensor* sink = nullptr) {
    nodes_.push_back(Node{std::move(op), std::move(value), Tensor(), requires_grad, std::move(inputs),
                          requires_grad ? std::move(backward) : nullptr, sink});
    return Var{nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

}  // namespace fdm
