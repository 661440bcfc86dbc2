#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "ratlesnet/autodiff.h"
#include "ratlesnet/tensor.h"

namespace ratlesnet {

// Weights are (out_ch, in_ch, k, k, k) and bias is (1, out_ch, 1, 1, 1).
// k = 3 uses zero padding 1, k = 1 is pointwise; both have stride 1 and keep
// the spatial extents unchanged.
template <typename T>
struct ConvParams {
  Tensor<T> weight;
  Tensor<T> bias;

  ConvParams() = default;
  ConvParams(std::size_t out_ch, std::size_t in_ch, std::size_t kernel);

  std::size_t out_channels() const { return weight.shape().batch(); }
  std::size_t in_channels() const { return weight.shape().channels(); }
  std::size_t kernel() const { return weight.shape().x(); }
  std::size_t param_count() const { return weight.numel() + bias.numel(); }
};

// Saved by max-pooling so unpooling can put values back where the maxima were.
struct PoolContext {
  Shape input_shape;
  Shape output_shape;
  // One flat index into the pooling input per pooled voxel.
  std::vector<std::size_t> argmax;
};

// Eager kernels. Used directly for inference and wrapped by the graph ops.
namespace kernels {

// Throws ShapeError for malformed weights or a channel mismatch.
template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// Accumulates into whichever gradient spans are non-empty.
template <typename T>
void conv3d_backward(const Tensor<T>& x, const Tensor<T>& weight, std::span<const T> grad_out,
                     std::span<T> grad_x, std::span<T> grad_weight, std::span<T> grad_bias);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>* const> xs);

template <typename T>
std::pair<Tensor<T>, PoolContext> maxpool3d(const Tensor<T>& x);

template <typename T>
Tensor<T> unpool3d(const Tensor<T>& x, const PoolContext& ctx);

// Mean over voxels of -log softmax(logits)[label]. labels are ordered
// (batch, x, y, z). When grad is non-empty it receives d(loss)/d(logits).
template <typename T>
T softmax_cross_entropy(const Tensor<T>& logits, std::span<const std::uint8_t> labels,
                        std::span<T> grad = {});

}  // namespace kernels

// Graph ops.
template <typename T>
NodeId conv3d(Graph<T>& g, NodeId x, NodeId weight, NodeId bias);

template <typename T>
NodeId relu(Graph<T>& g, NodeId x);

template <typename T>
NodeId concat_channels(Graph<T>& g, std::span<const NodeId> xs);

template <typename T>
struct PoolResult {
  NodeId output;
  std::shared_ptr<const PoolContext> context;
};

template <typename T>
PoolResult<T> maxpool3d(Graph<T>& g, NodeId x);

template <typename T>
NodeId unpool3d(Graph<T>& g, NodeId x, std::shared_ptr<const PoolContext> ctx);

template <typename T>
NodeId softmax_cross_entropy(Graph<T>& g, NodeId logits, std::vector<std::uint8_t> labels);

template <typename T>
NodeId sum(Graph<T>& g, NodeId x);

// sum_i weights[i] * x[i]; weights must match x's shape.
template <typename T>
NodeId weighted_sum(Graph<T>& g, NodeId x, Tensor<T> weights);

}  // namespace ratlesnet
