#include "ediv/nn/graph.hpp"

#include <stdexcept>
#include <string>

namespace ediv {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::conv2d: return "conv2d";
    case OpKind::relu: return "relu";
    case OpKind::maxpool2x2: return "maxpool2x2";
    case OpKind::global_avg_pool: return "global_avg_pool";
    case OpKind::flatten: return "flatten";
    case OpKind::linear: return "linear";
    case OpKind::cross_entropy: return "cross_entropy";
    case OpKind::sum: return "sum";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::channel_mean: return "channel_mean";
    case OpKind::resample: return "resample";
  }
  return "?";
}

const Graph::Node& Graph::node(Var v) const {
  if (v.id >= nodes_.size()) throw std::out_of_range("graph: invalid variable handle");
  return nodes_[v.id];
}

Graph::Node& Graph::node(Var v) {
  if (v.id >= nodes_.size()) throw std::out_of_range("graph: invalid variable handle");
  return nodes_[v.id];
}

Var Graph::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{OpKind::leaf, {}, std::move(value), requires_grad, nullptr});
  return Var{nodes_.size() - 1};
}

Var Graph::record(OpKind kind, std::vector<Var> inputs, Tensor value, BackwardFn backward) {
  bool needs_grad = false;
  std::vector<std::size_t> ids;
  ids.reserve(inputs.size());
  for (Var in : inputs) {
    needs_grad = needs_grad || node(in).requires_grad;
    ids.push_back(in.id);
  }
  if (!needs_grad) backward = nullptr;
  nodes_.push_back(Node{kind, std::move(ids), std::move(value), needs_grad, std::move(backward)});
  return Var{nodes_.size() - 1};
}

Tensor Graph::grad(Var v) const {
  const Node& n = node(v);
  Tensor g(n.value.shape(), 0.0);
  if (n.value.has_grad()) {
    auto src = n.value.grad();
    std::copy(src.begin(), src.end(), g.data().begin());
  }
  return g;
}

std::span<double> Graph::grad_accumulator(Var v) {
  Node& n = node(v);
  n.value.ensure_grad();
  return n.value.grad();
}

void Graph::backward(Var root, const Tensor& seed) {
  if (backward_done_)
    throw std::logic_error("graph: backward() already ran on this recording; run a new forward");
  Node& r = node(root);
  if (seed.shape() != r.value.shape())
    throw std::invalid_argument("graph: seed shape " + shape_str(seed.shape()) +
                                " does not match output shape " + shape_str(r.value.shape()));
  backward_done_ = true;
  visits_ = 0;
  if (!r.requires_grad) return;
  auto acc = grad_accumulator(root);
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += seed[i];

  for (std::size_t id = root.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.value.has_grad()) continue;
    ++visits_;
    if (n.backward) {
      // The closure may grow other nodes' gradient slots but never this one's.
      std::span<const double> out_grad = n.value.grad();
      n.backward(*this, out_grad);
    }
  }
}

}  // namespace ediv
