#include "marginlab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "marginlab/error.hpp"

namespace marginlab::ad {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

void accumulate(Matrix& into, const Matrix& delta) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += delta[i];
}

}  // namespace

NodeId Graph::variable(Matrix value) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return NodeId{nodes_.size() - 1};
}

const Graph::Node& Graph::node(NodeId id) const {
  if (id.index >= nodes_.size()) throw DomainError("node id out of range");
  return nodes_[id.index];
}

const Matrix& Graph::value(NodeId id) const { return node(id).value; }

Op Graph::op(NodeId id) const { return node(id).op; }

const Matrix& Graph::grad(NodeId id) const {
  node(id);
  if (id.index >= grads_.size()) throw DomainError("grad requested before backward()");
  return grads_[id.index];
}

void Graph::backward(NodeId root) {
  const Matrix& r = node(root).value;
  if (r.rows() != 1 || r.cols() != 1) {
    throw DimensionError("backward: root must be 1x1, got " + r.shape_string());
  }
  grads_.assign(nodes_.size(), Matrix{});
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    grads_[i] = Matrix(nodes_[i].value.rows(), nodes_[i].value.cols());
  }
  grads_[root.index] = Matrix::ones(1, 1);
  for (std::size_t i = root.index + 1; i-- > 0;) backprop_node(i);
}

void Graph::backprop_node(std::size_t i) {
  const Node& n = nodes_[i];
  const Matrix& dy = grads_[i];
  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::MatMul: {
      const Matrix& a = nodes_[n.lhs].value;
      const Matrix& b = nodes_[n.rhs].value;
      accumulate(grads_[n.lhs], marginlab::matmul(dy, b.transposed()));
      accumulate(grads_[n.rhs], marginlab::matmul(a.transposed(), dy));
      break;
    }
    case Op::Transpose:
      accumulate(grads_[n.lhs], dy.transposed());
      break;
    case Op::Add:
      accumulate(grads_[n.lhs], dy);
      accumulate(grads_[n.rhs], dy);
      break;
    case Op::Sub:
      accumulate(grads_[n.lhs], dy);
      accumulate(grads_[n.rhs], -1.0 * dy);
      break;
    case Op::Mul: {
      const Matrix& a = nodes_[n.lhs].value;
      const Matrix& b = nodes_[n.rhs].value;
      Matrix& ga = grads_[n.lhs];
      for (std::size_t k = 0; k < dy.size(); ++k) ga[k] += dy[k] * b[k];
      Matrix& gb = grads_[n.rhs];
      for (std::size_t k = 0; k < dy.size(); ++k) gb[k] += dy[k] * a[k];
      break;
    }
    case Op::Scale:
      accumulate(grads_[n.lhs], n.param * dy);
      break;
    case Op::AddConstant:
      accumulate(grads_[n.lhs], dy);
      break;
    case Op::AddRowBroadcast: {
      accumulate(grads_[n.lhs], dy);
      Matrix& gr = grads_[n.rhs];
      for (std::size_t r = 0; r < dy.rows(); ++r)
        for (std::size_t c = 0; c < dy.cols(); ++c) gr[c] += dy(r, c);
      break;
    }
    case Op::MulColBroadcast: {
      const Matrix& a = nodes_[n.lhs].value;
      const Matrix& col = nodes_[n.rhs].value;
      Matrix& ga = grads_[n.lhs];
      Matrix& gc = grads_[n.rhs];
      for (std::size_t r = 0; r < dy.rows(); ++r) {
        for (std::size_t c = 0; c < dy.cols(); ++c) {
          ga(r, c) += dy(r, c) * col[r];
          gc[r] += dy(r, c) * a(r, c);
        }
      }
      break;
    }
    case Op::Relu: {
      const Matrix& a = nodes_[n.lhs].value;
      Matrix& ga = grads_[n.lhs];
      for (std::size_t k = 0; k < dy.size(); ++k)
        if (a[k] > 0.0) ga[k] += dy[k];
      break;
    }
    case Op::Log: {
      const Matrix& a = nodes_[n.lhs].value;
      Matrix& ga = grads_[n.lhs];
      for (std::size_t k = 0; k < dy.size(); ++k) ga[k] += dy[k] / a[k];
      break;
    }
    case Op::Exp: {
      Matrix& ga = grads_[n.lhs];
      for (std::size_t k = 0; k < dy.size(); ++k) ga[k] += dy[k] * n.value[k];
      break;
    }
    case Op::RowL2Normalize: {
      // y = x / |x|  =>  dx = (dy - y (y . dy)) / |x|, aux holds |x| per row.
      const Matrix& y = n.value;
      Matrix& ga = grads_[n.lhs];
      for (std::size_t r = 0; r < y.rows(); ++r) {
        const double proj = dot(y.row(r), dy.row(r));
        const double norm = n.aux[r];
        for (std::size_t c = 0; c < y.cols(); ++c) {
          ga(r, c) += (dy(r, c) - y(r, c) * proj) / norm;
        }
      }
      break;
    }
    case Op::RowL2Norm: {
      const Matrix& a = nodes_[n.lhs].value;
      Matrix& ga = grads_[n.lhs];
      for (std::size_t r = 0; r < a.rows(); ++r) {
        const double norm = n.value[r];
        if (norm == 0.0) continue;
        for (std::size_t c = 0; c < a.cols(); ++c) ga(r, c) += dy[r] * a(r, c) / norm;
      }
      break;
    }
    case Op::Sum: {
      Matrix& ga = grads_[n.lhs];
      for (auto& v : ga.data()) v += dy[0];
      break;
    }
    case Op::Mean: {
      Matrix& ga = grads_[n.lhs];
      const double k = dy[0] / static_cast<double>(ga.size());
      for (auto& v : ga.data()) v += k;
      break;
    }
    case Op::SoftmaxCrossEntropy: {
      // aux holds the row softmax probabilities.
      const Matrix& p = n.aux;
      Matrix& ga = grads_[n.lhs];
      const double k = dy[0] / static_cast<double>(p.rows());
      for (std::size_t r = 0; r < p.rows(); ++r) {
        for (std::size_t c = 0; c < p.cols(); ++c) {
          const double target = (c == n.labels[r]) ? 1.0 : 0.0;
          ga(r, c) += k * (p(r, c) - target);
        }
      }
      break;
    }
  }
}

NodeId matmul(Graph& g, NodeId a, NodeId b) {
  Graph::Node n;
  n.op = Op::MatMul;
  n.lhs = a.index;
  n.rhs = b.index;
  n.value = marginlab::matmul(g.value(a), g.value(b));
  return g.push(std::move(n));
}

NodeId transpose(Graph& g, NodeId a) {
  Graph::Node n;
  n.op = Op::Transpose;
  n.lhs = a.index;
  n.value = g.value(a).transposed();
  return g.push(std::move(n));
}

NodeId add(Graph& g, NodeId a, NodeId b) {
  require_same_shape(g.value(a), g.value(b), "add");
  Graph::Node n;
  n.op = Op::Add;
  n.lhs = a.index;
  n.rhs = b.index;
  n.value = g.value(a) + g.value(b);
  return g.push(std::move(n));
}

NodeId sub(Graph& g, NodeId a, NodeId b) {
  require_same_shape(g.value(a), g.value(b), "sub");
  Graph::Node n;
  n.op = Op::Sub;
  n.lhs = a.index;
  n.rhs = b.index;
  n.value = g.value(a) - g.value(b);
  return g.push(std::move(n));
}

NodeId mul(Graph& g, NodeId a, NodeId b) {
  const Matrix& x = g.value(a);
  const Matrix& y = g.value(b);
  require_same_shape(x, y, "mul");
  Graph::Node n;
  n.op = Op::Mul;
  n.lhs = a.index;
  n.rhs = b.index;
  n.value = Matrix(x.rows(), x.cols());
  for (std::size_t k = 0; k < x.size(); ++k) n.value[k] = x[k] * y[k];
  return g.push(std::move(n));
}

NodeId scale(Graph& g, NodeId a, double k) {
  Graph::Node n;
  n.op = Op::Scale;
  n.lhs = a.index;
  n.param = k;
  n.value = k * g.value(a);
  return g.push(std::move(n));
}

NodeId add_constant(Graph& g, NodeId a, const Matrix& c) {
  require_same_shape(g.value(a), c, "add_constant");
  Graph::Node n;
  n.op = Op::AddConstant;
  n.lhs = a.index;
  n.value = g.value(a) + c;
  return g.push(std::move(n));
}

NodeId add_row_broadcast(Graph& g, NodeId a, NodeId row) {
  const Matrix& x = g.value(a);
  const Matrix& b = g.value(row);
  if (b.rows() != 1 || b.cols() != x.cols()) {
    throw DimensionError("add_row_broadcast: " + x.shape_string() + " + " + b.shape_string());
  }
  Graph::Node n;
  n.op = Op::AddRowBroadcast;
  n.lhs = a.index;
  n.rhs = row.index;
  n.value = x;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) n.value(r, c) += b[c];
  return g.push(std::move(n));
}

NodeId mul_col_broadcast(Graph& g, NodeId a, NodeId col) {
  const Matrix& x = g.value(a);
  const Matrix& s = g.value(col);
  if (s.cols() != 1 || s.rows() != x.rows()) {
    throw DimensionError("mul_col_broadcast: " + x.shape_string() + " * " + s.shape_string());
  }
  Graph::Node n;
  n.op = Op::MulColBroadcast;
  n.lhs = a.index;
  n.rhs = col.index;
  n.value = x;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) n.value(r, c) *= s[r];
  return g.push(std::move(n));
}

NodeId relu(Graph& g, NodeId a) {
  Graph::Node n;
  n.op = Op::Relu;
  n.lhs = a.index;
  n.value = g.value(a);
  for (auto& v : n.value.data()) v = std::max(v, 0.0);
  return g.push(std::move(n));
}

NodeId log(Graph& g, NodeId a) {
  Graph::Node n;
  n.op = Op::Log;
  n.lhs = a.index;
  n.value = g.value(a);
  for (auto& v : n.value.data()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive entry " + std::to_string(v));
    v = std::log(v);
  }
  return g.push(std::move(n));
}

NodeId exp(Graph& g, NodeId a) {
  Graph::Node n;
  n.op = Op::Exp;
  n.lhs = a.index;
  n.value = g.value(a);
  for (auto& v : n.value.data()) v = std::exp(v);
  return g.push(std::move(n));
}

NodeId row_l2_normalize(Graph& g, NodeId a, double eps) {
  const Matrix& x = g.value(a);
  Graph::Node n;
  n.op = Op::RowL2Normalize;
  n.lhs = a.index;
  n.aux = Matrix(x.rows(), 1);
  n.value = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double norm = l2_norm(x.row(r));
    if (!(norm > eps)) {
      throw DegenerateVectorError("row_l2_normalize: row " + std::to_string(r) +
                                  " has norm " + std::to_string(norm) + " <= eps");
    }
    n.aux[r] = norm;
    for (auto& v : n.value.row(r)) v /= norm;
  }
  return g.push(std::move(n));
}

NodeId row_l2_norm(Graph& g, NodeId a) {
  const Matrix& x = g.value(a);
  Graph::Node n;
  n.op = Op::RowL2Norm;
  n.lhs = a.index;
  n.value = Matrix(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) n.value[r] = l2_norm(x.row(r));
  return g.push(std::move(n));
}

NodeId sum(Graph& g, NodeId a) {
  Graph::Node n;
  n.op = Op::Sum;
  n.lhs = a.index;
  double s = 0.0;
  for (double v : g.value(a).data()) s += v;
  n.value = Matrix(1, 1, s);
  return g.push(std::move(n));
}

NodeId mean(Graph& g, NodeId a) {
  const Matrix& x = g.value(a);
  if (x.empty()) throw DimensionError("mean of empty matrix");
  Graph::Node n;
  n.op = Op::Mean;
  n.lhs = a.index;
  double s = 0.0;
  for (double v : x.data()) s += v;
  n.value = Matrix(1, 1, s / static_cast<double>(x.size()));
  return g.push(std::move(n));
}

NodeId softmax_cross_entropy(Graph& g, NodeId logits, std::span<const std::size_t> labels) {
  const Matrix& z = g.value(logits);
  if (labels.size() != z.rows() || z.rows() == 0) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + z.shape_string());
  }
  Graph::Node n;
  n.op = Op::SoftmaxCrossEntropy;
  n.lhs = logits.index;
  n.labels.assign(labels.begin(), labels.end());
  n.aux = Matrix(z.rows(), z.cols());
  double total = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    if (labels[r] >= z.cols()) {
      throw DomainError("label " + std::to_string(labels[r]) + " out of range for " +
                        std::to_string(z.cols()) + " classes");
    }
    const auto row = z.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double denom = 0.0;
    for (double v : row) denom += std::exp(v - mx);
    const double lse = mx + std::log(denom);
    for (std::size_t c = 0; c < z.cols(); ++c) n.aux(r, c) = std::exp(row[c] - lse);
    total += lse - row[labels[r]];
  }
  n.value = Matrix(1, 1, total / static_cast<double>(z.rows()));
  return g.push(std::move(n));
}

}  // namespace marginlab::ad
