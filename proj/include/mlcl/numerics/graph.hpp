#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mlcl/numerics/tensor.hpp"

namespace mlcl {

/// A trainable tensor that outlives any single graph. Gradients accumulate
/// across backward passes until zero_grad().
struct Parameter {
  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(0.0); }

  std::string name;
  Tensor value;
  Tensor grad;
};

class Graph;

/// Handle to a node in a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const std::vector<std::size_t>& shape() const { return value().shape(); }
};

/// Define-by-run tape. Nodes are appended in evaluation order, which is a
/// topological order, so backward walks the tape once in reverse.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor t) { return push(std::move(t), {}, nullptr, false, nullptr); }

  /// Leaf that receives a gradient but is not bound to a Parameter.
  Var variable(Tensor t) { return push(std::move(t), {}, nullptr, true, nullptr); }

  Var parameter(Parameter& p) {
    if (!p.grad.same_shape(p.value)) p.grad = Tensor(p.value.shape());
    return push(p.value, {}, nullptr, true, &p);
  }

  /// Appends an operation node. The node requires a gradient iff any input does.
  Var op(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
    bool needs = false;
    for (std::size_t i : inputs) needs = needs || nodes_.at(i).requires_grad;
    return push(std::move(value), std::move(inputs), needs ? std::move(backward) : nullptr, needs, nullptr);
  }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const Tensor& value(Var v) const { return value(v.id); }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Gradient buffer of a node, allocated on first use.
  Tensor& grad(std::size_t id) {
    Node& n = nodes_.at(id);
    if (!n.grad.same_shape(n.value)) n.grad = Tensor(n.value.shape());
    return n.grad;
  }
  const Tensor& grad(Var v) { return grad(v.id); }

  std::size_t size() const { return nodes_.size(); }

  /// Reverse pass from a scalar node. Parameter gradients are added into
  /// Parameter::grad.
  void backward(Var loss) {
    if (loss.graph != this) throw std::invalid_argument("backward: node belongs to another graph");
    if (!value(loss).is_scalar()) {
      throw std::invalid_argument("backward: loss must be scalar, got " + value(loss).shape_string());
    }
    for (Node& n : nodes_) {
      if (n.requires_grad) {
        if (!n.grad.same_shape(n.value)) n.grad = Tensor(n.value.shape());
        else n.grad.fill(0.0);
      }
    }
    if (!nodes_[loss.id].requires_grad) return;
    grad(loss.id)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward) n.backward(*this, i);
    }
    for (Node& n : nodes_) {
      if (n.param == nullptr) continue;
      auto dst = n.param->grad.data();
      auto src = n.grad.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }

  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    Parameter* param = nullptr;
  };

  Var push(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward, bool requires_grad, Parameter* p) {
    nodes_.push_back(Node{std::move(value), Tensor{}, std::move(inputs), std::move(backward), requires_grad, p});
    return Var{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return graph->value(id); }

}  // namespace mlcl
