#include "ratlesnet/autodiff.h"

#include <algorithm>
#include <cmath>

namespace ratlesnet {

namespace {

template <typename T>
bool finite(std::span<const T> values) {
  return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
}

}  // namespace

template <typename T>
std::span<const T> BackwardContext<T>::grad_output() const {
  return graph_.nodes_[node_].grad;
}

template <typename T>
const Tensor<T>& BackwardContext<T>::output() const {
  return graph_.value(node_);
}

template <typename T>
const Tensor<T>& BackwardContext<T>::input(std::size_t i) const {
  return graph_.value(graph_.nodes_[node_].inputs.at(i));
}

template <typename T>
std::size_t BackwardContext<T>::num_inputs() const {
  return graph_.nodes_[node_].inputs.size();
}

template <typename T>
bool BackwardContext<T>::needs_grad(std::size_t i) const {
  return graph_.nodes_[graph_.nodes_[node_].inputs.at(i)].needs_grad;
}

template <typename T>
std::span<T> BackwardContext<T>::grad_input(std::size_t i) {
  const NodeId in = graph_.nodes_[node_].inputs.at(i);
  if (!graph_.nodes_[in].needs_grad) return {};
  return graph_.ensure_grad(in);
}

template <typename T>
NodeId Graph<T>::constant(Tensor<T> value) {
  Node n;
  n.kind = "constant";
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

template <typename T>
NodeId Graph<T>::leaf(Tensor<T>& tensor) {
  Node n;
  n.kind = "leaf";
  n.external = &tensor;
  n.needs_grad = tensor.requires_grad();
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

template <typename T>
NodeId Graph<T>::record(std::string kind, std::vector<NodeId> inputs, Tensor<T> output,
                        BackwardFn<T> backward) {
  bool needs = false;
  for (NodeId in : inputs) {
    if (in >= nodes_.size()) throw ContractError(kind + ": input node does not precede it");
    needs = needs || nodes_[in].needs_grad;
  }
  if (!output.all_finite()) throw NumericError("non-finite value produced by " + kind);
  Node n;
  n.kind = std::move(kind);
  n.inputs = std::move(inputs);
  n.owned = std::move(output);
  n.needs_grad = needs;
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

template <typename T>
const Tensor<T>& Graph<T>::value(NodeId id) const {
  const Node& n = nodes_.at(id);
  return n.external ? *n.external : n.owned;
}

template <typename T>
std::span<T> Graph<T>::ensure_grad(NodeId id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(value(id).numel(), T{0});
  return n.grad;
}

template <typename T>
void Graph<T>::backward(NodeId loss) {
  if (loss >= nodes_.size()) throw ContractError("backward: unknown loss node");
  if (!value(loss).shape().is_scalar()) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        value(loss).shape().to_string());
  }
  for (Node& n : nodes_) n.grad.clear();
  if (!nodes_[loss].needs_grad) return;
  ensure_grad(loss)[0] = T{1};

  for (NodeId id = loss + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty() || !n.needs_grad) continue;
    if (!finite<T>(n.grad)) throw NumericError("non-finite gradient at " + n.kind);
    if (n.backward) {
      BackwardContext<T> ctx(*this, id);
      n.backward(ctx);
    } else if (n.external && n.external->requires_grad()) {
      auto dst = n.external->grad();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
    }
  }
}

template class Graph<float>;
template class Graph<double>;
template class BackwardContext<float>;
template class BackwardContext<double>;

}  // namespace ratlesnet
