#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ediv/nn/tensor.hpp"

namespace ediv {

enum class OpKind {
  leaf,
  conv2d,
  relu,
  maxpool2x2,
  global_avg_pool,
  flatten,
  linear,
  cross_entropy,
  sum,
  mul,
  scale,
  channel_mean,
  resample,
};

const char* op_name(OpKind kind);

/// Handle to a node in a Graph.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

/// Tape of operations recorded during a forward pass. Nodes are appended in
/// evaluation order, so creation order is a topological order and the graph
/// is acyclic by construction. backward() may run once per recording.
class Graph {
 public:
  // Receives the gradient flowing into the node's output and accumulates into
  // the gradients of its inputs.
  using BackwardFn = std::function<void(Graph&, std::span<const double> out_grad)>;

  Var leaf(Tensor value, bool requires_grad = false);
  Var record(OpKind kind, std::vector<Var> inputs, Tensor value, BackwardFn backward);

  const Tensor& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  OpKind kind(Var v) const { return node(v).kind; }
  const std::vector<std::size_t>& inputs(Var v) const { return node(v).inputs; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient of the last backward root with respect to v; zeros if v received none.
  Tensor grad(Var v) const;
  // Zero-initialised accumulator for v's gradient; for use inside BackwardFn.
  std::span<double> grad_accumulator(Var v);

  // Seeds d(root) = seed and propagates to every node that requires a
  // gradient. Throws std::logic_error if called a second time.
  void backward(Var root, const Tensor& seed);
  bool backward_done() const { return backward_done_; }
  // Number of node visits made by the last backward(); each node at most once.
  std::size_t backward_visits() const { return visits_; }

 private:
  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor value;
    bool requires_grad;
    BackwardFn backward;
  };
  const Node& node(Var v) const;
  Node& node(Var v);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
  std::size_t visits_ = 0;
};

}  // namespace ediv
