#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ratlesnet/tensor.h"

namespace ratlesnet {

using NodeId = std::size_t;

template <typename T>
class Graph;

// View handed to an op's backward closure. Gradients are accumulated into the
// buffers returned by grad_input(); buffers for inputs that do not need a
// gradient are never allocated.
template <typename T>
class BackwardContext {
 public:
  BackwardContext(Graph<T>& graph, NodeId node) : graph_(graph), node_(node) {}

  std::span<const T> grad_output() const;
  const Tensor<T>& output() const;
  const Tensor<T>& input(std::size_t i) const;
  std::size_t num_inputs() const;
  bool needs_grad(std::size_t i) const;
  std::span<T> grad_input(std::size_t i);

 private:
  Graph<T>& graph_;
  NodeId node_;
};

template <typename T>
using BackwardFn = std::function<void(BackwardContext<T>&)>;

// Define-by-run tape. Nodes are appended in evaluation order, so insertion
// order is a topological order and backward() walks it in reverse.
template <typename T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  // Leaf owned by the graph; never receives a gradient.
  NodeId constant(Tensor<T> value);
  // Leaf referring to a caller-owned tensor (a parameter or a checked input).
  // If it requires grad, backward() accumulates into its grad buffer. The
  // tensor must outlive the graph.
  NodeId leaf(Tensor<T>& tensor);
  // Appends an op result. Throws NumericError if the output is not finite.
  NodeId record(std::string kind, std::vector<NodeId> inputs, Tensor<T> output,
                BackwardFn<T> backward);

  const Tensor<T>& value(NodeId id) const;
  bool needs_grad(NodeId id) const { return nodes_.at(id).needs_grad; }
  const std::string& kind(NodeId id) const { return nodes_.at(id).kind; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }
  bool has_backward(NodeId id) const { return static_cast<bool>(nodes_.at(id).backward); }
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar node. Intermediate gradients are recomputed
  // from scratch on each call; leaf gradients accumulate until zeroed.
  void backward(NodeId loss);

  // Gradient of a node from the most recent backward(), empty if none.
  std::span<const T> grad(NodeId id) const { return nodes_.at(id).grad; }

 private:
  friend class BackwardContext<T>;

  struct Node {
    std::string kind;
    std::vector<NodeId> inputs;
    Tensor<T> owned;
    Tensor<T>* external = nullptr;
    bool needs_grad = false;
    BackwardFn<T> backward;
    std::vector<T> grad;
  };

  std::span<T> ensure_grad(NodeId id);

  std::vector<Node> nodes_;
};

extern template class Graph<float>;
extern template class Graph<double>;
extern template class BackwardContext<float>;
extern template class BackwardContext<double>;

}  // namespace ratlesnet
