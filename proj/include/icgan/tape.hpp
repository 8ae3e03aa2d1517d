#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "icgan/tensor.hpp"

namespace icgan {

using NodeId = int;

namespace detail {

inline double softplus_stable(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace detail

// Reverse-mode tape. Built fresh for every forward pass; backward() fills
// per-node gradients in a single sweep from the loss node down.
class Tape {
 public:
  enum class Op {
    Leaf,
    MatMul,
    Add,
    BiasAdd,
    LeakyRelu,
    Tanh,
    Sigmoid,
    Softplus,
    ConcatRows,
    ConcatCols,
    SliceCols,
    GatherRows,
    InnerProduct,
    RowwiseInner,
    Sum,
    Mean,
    Affine,
  };

  NodeId leaf(Tensor value) {
    if (!value.all_finite())
      throw std::invalid_argument("tape: leaf has non-finite entries");
    return push(Op::Leaf, -1, -1, std::move(value));
  }

  // [m,k] x [k,n] -> [m,n]
  NodeId matmul(NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    require_rank2(ta, "matmul lhs");
    require_rank2(tb, "matmul rhs");
    if (ta.cols() != tb.rows())
      throw std::invalid_argument("matmul: inner dims disagree, " + ta.shape_str() +
                                  " x " + tb.shape_str());
    Tensor out = Tensor::zeros({ta.rows(), tb.cols()});
    as_matrix(out).noalias() = as_matrix(ta) * as_matrix(tb);
    return push(Op::MatMul, a, b, std::move(out));
  }

  NodeId add(NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb))
      throw std::invalid_argument("add: shapes disagree, " + ta.shape_str() + " vs " +
                                  tb.shape_str());
    Tensor out = ta;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
    return push(Op::Add, a, b, std::move(out));
  }

  // x [m,n] + bias [n], broadcast over rows
  NodeId bias_add(NodeId x, NodeId b) {
    const Tensor& tx = value(x);
    const Tensor& tb = value(b);
    require_rank2(tx, "bias_add input");
    if (tb.rank() != 1 || tb.shape[0] != tx.cols())
      throw std::invalid_argument("bias_add: bias " + tb.shape_str() +
                                  " does not match input " + tx.shape_str());
    Tensor out = tx;
    for (std::size_t i = 0; i < tx.rows(); ++i)
      for (std::size_t j = 0; j < tx.cols(); ++j) out.at(i, j) += tb.data[j];
    return push(Op::BiasAdd, x, b, std::move(out));
  }

  NodeId leaky_relu(NodeId x, double slope) {
    const Tensor& tx = value(x);
    Tensor out = tx;
    for (double& v : out.data)
      if (v < 0.0) v *= slope;
    NodeId id = push(Op::LeakyRelu, x, -1, std::move(out));
    nodes_[id].p = slope;
    return id;
  }

  NodeId tanh(NodeId x) {
    Tensor out = value(x);
    for (double& v : out.data) v = std::tanh(v);
    return push(Op::Tanh, x, -1, std::move(out));
  }

  NodeId sigmoid(NodeId x) {
    Tensor out = value(x);
    for (double& v : out.data) v = detail::sigmoid(v);
    return push(Op::Sigmoid, x, -1, std::move(out));
  }

  NodeId softplus(NodeId x) {
    Tensor out = value(x);
    for (double& v : out.data) v = detail::softplus_stable(v);
    return push(Op::Softplus, x, -1, std::move(out));
  }

  // axis 0 stacks rows, axis 1 joins columns; both operands rank 2
  NodeId concat(NodeId a, NodeId b, int axis) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    require_rank2(ta, "concat lhs");
    require_rank2(tb, "concat rhs");
    if (axis == 0) {
      if (ta.cols() != tb.cols())
        throw std::invalid_argument("concat axis 0: column counts disagree, " +
                                    ta.shape_str() + " vs " + tb.shape_str());
      Tensor out = Tensor::zeros({ta.rows() + tb.rows(), ta.cols()});
      std::copy(ta.data.begin(), ta.data.end(), out.data.begin());
      std::copy(tb.data.begin(), tb.data.end(), out.data.begin() + ta.data.size());
      return push(Op::ConcatRows, a, b, std::move(out));
    }
    if (axis == 1) {
      if (ta.rows() != tb.rows())
        throw std::invalid_argument("concat axis 1: row counts disagree, " +
                                    ta.shape_str() + " vs " + tb.shape_str());
      Tensor out = Tensor::zeros({ta.rows(), ta.cols() + tb.cols()});
      for (std::size_t i = 0; i < ta.rows(); ++i) {
        for (std::size_t j = 0; j < ta.cols(); ++j) out.at(i, j) = ta.at(i, j);
        for (std::size_t j = 0; j < tb.cols(); ++j)
          out.at(i, ta.cols() + j) = tb.at(i, j);
      }
      return push(Op::ConcatCols, a, b, std::move(out));
    }
    throw std::invalid_argument("concat: axis must be 0 or 1, got " +
                                std::to_string(axis));
  }

  // columns [c0, c1) of a rank-2 node
  NodeId slice_cols(NodeId x, std::size_t c0, std::size_t c1) {
    const Tensor& tx = value(x);
    require_rank2(tx, "slice_cols input");
    if (c0 >= c1 || c1 > tx.cols())
      throw std::invalid_argument("slice_cols: range [" + std::to_string(c0) + "," +
                                  std::to_string(c1) + ") invalid for " +
                                  tx.shape_str());
    Tensor out = Tensor::zeros({tx.rows(), c1 - c0});
    for (std::size_t i = 0; i < tx.rows(); ++i)
      for (std::size_t j = c0; j < c1; ++j) out.at(i, j - c0) = tx.at(i, j);
    NodeId id = push(Op::SliceCols, x, -1, std::move(out));
    nodes_[id].p = static_cast<double>(c0);
    return id;
  }

  // rows of a [V,c] table selected by index; backward scatter-adds
  NodeId gather_rows(NodeId table, std::vector<std::size_t> rows) {
    const Tensor& tt = value(table);
    require_rank2(tt, "gather_rows table");
    for (std::size_t r : rows)
      if (r >= tt.rows())
        throw std::invalid_argument("gather_rows: index " + std::to_string(r) +
                                    " out of range for " + tt.shape_str());
    Tensor out = Tensor::zeros({rows.size(), tt.cols()});
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < tt.cols(); ++j) out.at(i, j) = tt.at(rows[i], j);
    NodeId id = push(Op::GatherRows, table, -1, std::move(out));
    nodes_[id].rows = std::move(rows);
    return id;
  }

  // full contraction of two same-shape tensors, scalar result
  NodeId inner_product(NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb))
      throw std::invalid_argument("inner_product: shapes disagree, " + ta.shape_str() +
                                  " vs " + tb.shape_str());
    double s = 0.0;
    for (std::size_t i = 0; i < ta.data.size(); ++i) s += ta.data[i] * tb.data[i];
    return push(Op::InnerProduct, a, b, Tensor::scalar(s));
  }

  // per-row dot product of two [m,n] tensors -> [m,1]
  NodeId rowwise_inner(NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb) || ta.rank() != 2)
      throw std::invalid_argument("rowwise_inner: need equal rank-2 shapes, got " +
                                  ta.shape_str() + " vs " + tb.shape_str());
    Tensor out = Tensor::zeros({ta.rows(), 1});
    for (std::size_t i = 0; i < ta.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < ta.cols(); ++j) s += ta.at(i, j) * tb.at(i, j);
      out.at(i, 0) = s;
    }
    return push(Op::RowwiseInner, a, b, std::move(out));
  }

  NodeId sum(NodeId x) {
    double s = 0.0;
    for (double v : value(x).data) s += v;
    return push(Op::Sum, x, -1, Tensor::scalar(s));
  }

  NodeId mean(NodeId x) {
    if (value(x).numel() == 0)
      throw std::invalid_argument("mean: empty tensor");
    double s = 0.0;
    for (double v : value(x).data) s += v;
    return push(Op::Mean, x, -1,
                Tensor::scalar(s / static_cast<double>(value(x).numel())));
  }

  // elementwise scale * x + shift
  NodeId affine(NodeId x, double scale, double shift) {
    Tensor out = value(x);
    for (double& v : out.data) v = scale * v + shift;
    NodeId id = push(Op::Affine, x, -1, std::move(out));
    nodes_[id].p = scale;
    nodes_[id].q = shift;
    return id;
  }

  NodeId neg(NodeId x) { return affine(x, -1.0, 0.0); }

  const Tensor& value(NodeId id) const { return check(id).value; }

  const Tensor& grad(NodeId id) const {
    const Node& n = check(id);
    if (n.grad.data.empty())
      throw std::logic_error("tape: grad read before backward");
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  // Single reverse sweep from a scalar loss. Gradients of all nodes that
  // feed the loss are accumulated; independent nodes keep zero grads.
  void backward(NodeId loss) {
    const Tensor& lv = value(loss);
    if (lv.numel() != 1)
      throw std::invalid_argument("backward: loss must be scalar, got " +
                                  lv.shape_str());
    for (Node& n : nodes_) n.grad = Tensor::zeros(n.value.shape);
    nodes_[loss].grad.data[0] = 1.0;
    for (NodeId id = loss; id >= 0; --id) propagate(id);
  }

 private:
  struct Node {
    Op op;
    NodeId a, b;
    double p = 0.0;  // slope, scale, or slice origin
    double q = 0.0;
    std::vector<std::size_t> rows;
    Tensor value;
    Tensor grad;
  };

  std::vector<Node> nodes_;

  NodeId push(Op op, NodeId a, NodeId b, Tensor v) {
    nodes_.push_back(Node{op, a, b, 0.0, 0.0, {}, std::move(v), Tensor{}});
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  const Node& check(NodeId id) const {
    if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
      throw std::out_of_range("tape: bad node id " + std::to_string(id));
    return nodes_[static_cast<std::size_t>(id)];
  }

  static void require_rank2(const Tensor& t, const char* what) {
    if (t.rank() != 2)
      throw std::invalid_argument(std::string(what) + ": need rank 2, got " +
                                  t.shape_str());
  }

  void propagate(NodeId id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    const Tensor& g = n.grad;
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::MatMul: {
        Node& a = nodes_[n.a];
        Node& b = nodes_[n.b];
        as_matrix(a.grad).noalias() += as_matrix(g) * as_matrix(b.value).transpose();
        as_matrix(b.grad).noalias() += as_matrix(a.value).transpose() * as_matrix(g);
        break;
      }
      case Op::Add: {
        accum(n.a, g.data);
        accum(n.b, g.data);
        break;
      }
      case Op::BiasAdd: {
        accum(n.a, g.data);
        Node& b = nodes_[n.b];
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) b.grad.data[j] += g.at(i, j);
        break;
      }
      case Op::LeakyRelu: {
        Node& a = nodes_[n.a];
        for (std::size_t i = 0; i < g.data.size(); ++i)
          a.grad.data[i] += (a.value.data[i] > 0.0 ? 1.0 : n.p) * g.data[i];
        break;
      }
      case Op::Tanh: {
        Node& a = nodes_[n.a];
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          double y = n.value.data[i];
          a.grad.data[i] += (1.0 - y * y) * g.data[i];
        }
        break;
      }
      case Op::Sigmoid: {
        Node& a = nodes_[n.a];
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          double y = n.value.data[i];
          a.grad.data[i] += y * (1.0 - y) * g.data[i];
        }
        break;
      }
      case Op::Softplus: {
        Node& a = nodes_[n.a];
        for (std::size_t i = 0; i < g.data.size(); ++i)
          a.grad.data[i] += detail::sigmoid(a.value.data[i]) * g.data[i];
        break;
      }
      case Op::ConcatRows: {
        Node& a = nodes_[n.a];
        Node& b = nodes_[n.b];
        for (std::size_t i = 0; i < a.grad.data.size(); ++i)
          a.grad.data[i] += g.data[i];
        for (std::size_t i = 0; i < b.grad.data.size(); ++i)
          b.grad.data[i] += g.data[a.grad.data.size() + i];
        break;
      }
      case Op::ConcatCols: {
        Node& a = nodes_[n.a];
        Node& b = nodes_[n.b];
        std::size_t ca = a.value.cols(), cb = b.value.cols();
        for (std::size_t i = 0; i < g.rows(); ++i) {
          for (std::size_t j = 0; j < ca; ++j) a.grad.at(i, j) += g.at(i, j);
          for (std::size_t j = 0; j < cb; ++j) b.grad.at(i, j) += g.at(i, ca + j);
        }
        break;
      }
      case Op::SliceCols: {
        Node& a = nodes_[n.a];
        std::size_t c0 = static_cast<std::size_t>(n.p);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) a.grad.at(i, c0 + j) += g.at(i, j);
        break;
      }
      case Op::GatherRows: {
        Node& a = nodes_[n.a];
        for (std::size_t i = 0; i < n.rows.size(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j)
            a.grad.at(n.rows[i], j) += g.at(i, j);
        break;
      }
      case Op::InnerProduct: {
        Node& a = nodes_[n.a];
        Node& b = nodes_[n.b];
        double gs = g.data[0];
        for (std::size_t i = 0; i < a.grad.data.size(); ++i) {
          a.grad.data[i] += gs * b.value.data[i];
          b.grad.data[i] += gs * a.value.data[i];
        }
        break;
      }
      case Op::RowwiseInner: {
        Node& a = nodes_[n.a];
        Node& b = nodes_[n.b];
        for (std::size_t i = 0; i < a.value.rows(); ++i) {
          double gi = g.at(i, 0);
          for (std::size_t j = 0; j < a.value.cols(); ++j) {
            a.grad.at(i, j) += gi * b.value.at(i, j);
            b.grad.at(i, j) += gi * a.value.at(i, j);
          }
        }
        break;
      }
      case Op::Sum: {
        Node& a = nodes_[n.a];
        double gs = g.data[0];
        for (double& v : a.grad.data) v += gs;
        break;
      }
      case Op::Mean: {
        Node& a = nodes_[n.a];
        double gs = g.data[0] / static_cast<double>(a.value.numel());
        for (double& v : a.grad.data) v += gs;
        break;
      }
      case Op::Affine: {
        Node& a = nodes_[n.a];
        for (std::size_t i = 0; i < g.data.size(); ++i)
          a.grad.data[i] += n.p * g.data[i];
        break;
      }
    }
  }

  void accum(NodeId id, const std::vector<double>& g) {
    Node& t = nodes_[static_cast<std::size_t>(id)];
    for (std::size_t i = 0; i < g.size(); ++i) t.grad.data[i] += g[i];
  }
};

}  // namespace icgan
