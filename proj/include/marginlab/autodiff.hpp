#pragma once

// Tape-style reverse-mode automatic differentiation over Matrix values.
//
// A Graph is an append-only record of operations. Every op appends one node
// whose inputs were appended earlier, so the tape order is a topological
// order and backward() is a single reverse sweep. Graphs are cheap and are
// rebuilt for every training step.

#include <cstddef>
#include <span>
#include <vector>

#include "marginlab/matrix.hpp"

namespace marginlab::ad {

struct NodeId {
  std::size_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

enum class Op {
  Leaf,
  MatMul,
  Transpose,
  Add,
  Sub,
  Mul,
  Scale,
  AddConstant,
  AddRowBroadcast,
  MulColBroadcast,
  Relu,
  Log,
  Exp,
  RowL2Normalize,
  RowL2Norm,
  Sum,
  Mean,
  SoftmaxCrossEntropy,
};

class Graph {
 public:
  // Leaf node holding a parameter or input. Gradients are tracked for every
  // node; leaves are simply nodes without inputs.
  NodeId variable(Matrix value);

  const Matrix& value(NodeId id) const;
  // Gradient of the last backward() root with respect to this node.
  const Matrix& grad(NodeId id) const;
  Op op(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a 1x1 root. Gradient accumulators are reset first, so
  // calling it twice yields identical gradients.
  void backward(NodeId root);

 private:
  struct Node {
    Op op = Op::Leaf;
    std::size_t lhs = 0;
    std::size_t rhs = 0;
    double param = 0.0;
    Matrix value;
    Matrix aux;
    std::vector<std::size_t> labels;
  };

  NodeId push(Node node);
  const Node& node(NodeId id) const;
  void backprop_node(std::size_t i);

  std::vector<Node> nodes_;
  std::vector<Matrix> grads_;

  friend NodeId matmul(Graph&, NodeId, NodeId);
  friend NodeId transpose(Graph&, NodeId);
  friend NodeId add(Graph&, NodeId, NodeId);
  friend NodeId sub(Graph&, NodeId, NodeId);
  friend NodeId mul(Graph&, NodeId, NodeId);
  friend NodeId scale(Graph&, NodeId, double);
  friend NodeId add_constant(Graph&, NodeId, const Matrix&);
  friend NodeId add_row_broadcast(Graph&, NodeId, NodeId);
  friend NodeId mul_col_broadcast(Graph&, NodeId, NodeId);
  friend NodeId relu(Graph&, NodeId);
  friend NodeId log(Graph&, NodeId);
  friend NodeId exp(Graph&, NodeId);
  friend NodeId row_l2_normalize(Graph&, NodeId, double);
  friend NodeId row_l2_norm(Graph&, NodeId);
  friend NodeId sum(Graph&, NodeId);
  friend NodeId mean(Graph&, NodeId);
  friend NodeId softmax_cross_entropy(Graph&, NodeId, std::span<const std::size_t>);
};

NodeId matmul(Graph& g, NodeId a, NodeId b);
NodeId transpose(Graph& g, NodeId a);
NodeId add(Graph& g, NodeId a, NodeId b);
NodeId sub(Graph& g, NodeId a, NodeId b);
// Elementwise (Hadamard) product.
NodeId mul(Graph& g, NodeId a, NodeId b);
NodeId scale(Graph& g, NodeId a, double k);
// a + c for a constant matrix c of the same shape (no gradient flows to c).
NodeId add_constant(Graph& g, NodeId a, const Matrix& c);
// N x D plus a 1 x D row added to every row (bias).
NodeId add_row_broadcast(Graph& g, NodeId a, NodeId row);
// N x D times an N x 1 column, row i scaled by col(i).
NodeId mul_col_broadcast(Graph& g, NodeId a, NodeId col);
NodeId relu(Graph& g, NodeId a);
// Throws DomainError on any non-positive entry.
NodeId log(Graph& g, NodeId a);
NodeId exp(Graph& g, NodeId a);
// Each row divided by its L2 norm. Throws DegenerateVectorError when a row
// norm is <= eps.
NodeId row_l2_normalize(Graph& g, NodeId a, double eps = 1e-12);
// N x 1 column of row L2 norms.
NodeId row_l2_norm(Graph& g, NodeId a);
NodeId sum(Graph& g, NodeId a);
NodeId mean(Graph& g, NodeId a);
// Mean over rows of -log softmax(logits)[label], evaluated with max-shifted
// log-sum-exp. Returns a 1x1 node.
NodeId softmax_cross_entropy(Graph& g, NodeId logits, std::span<const std::size_t> labels);

}  // namespace marginlab::ad
