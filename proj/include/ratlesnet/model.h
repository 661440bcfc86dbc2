#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ratlesnet/autodiff.h"
#include "ratlesnet/ops.h"
#include "ratlesnet/volume.h"

namespace ratlesnet {

// Declarative RatLesNet topology. With `levels` pooling stages the network is
//
//   enc_block_i (dense) -> maxpool            for i = 0 .. levels-1
//   bridge (dense)
//   bottleneck_i (1x1x1 + ReLU) -> unpool(i) -> dec_block_i (dense)
//                                             for i = levels-1 .. 0
//   classifier (1x1x1, logits)
//
// Each dense block adds 2 * growth_rate channels. Each bottleneck maps back to
// the channel count seen by its mirrored pooling stage, which index-reusing
// unpooling requires.
struct ModelConfig {
  std::size_t input_channels = 1;
  std::size_t num_classes = 2;
  std::size_t growth_rate = 18;
  std::size_t levels = 2;
  std::uint64_t seed = 0;

  // Throws ConfigError on zero-valued fields.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename T>
struct NamedConv {
  std::string name;
  ConvParams<T> params;
};

template <typename T>
class Model {
 public:
  Model() = default;
  // Builds the layer list with zero weights; see build_model for initialization.
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  std::vector<NamedConv<T>>& layers() { return layers_; }
  const std::vector<NamedConv<T>>& layers() const { return layers_; }

  // Weight and bias of every layer, in layer order.
  std::vector<Tensor<T>*> parameters();
  std::vector<const Tensor<T>*> parameters() const;
  std::size_t param_count() const;

  // Records the network on g, binding this model's tensors as leaves.
  NodeId forward(Graph<T>& g, NodeId x);
  // Same, with caller-supplied parameter nodes (two per layer, in order).
  NodeId forward(Graph<T>& g, NodeId x, std::span<const NodeId> params) const;
  // Eager inference; intermediates are released as soon as they are consumed.
  Tensor<T> infer(const Tensor<T>& x) const;

  template <typename U>
  Model<U> cast() const {
    Model<U> out(config_);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      out.layers()[i].params.weight = layers_[i].params.weight.template cast<U>();
      out.layers()[i].params.bias = layers_[i].params.bias.template cast<U>();
    }
    return out;
  }

  // Throws ShapeError if x is incompatible with the config.
  void check_input(const Shape& x) const;

 private:
  ModelConfig config_;
  std::vector<NamedConv<T>> layers_;
};

// He-style initialization: weights ~ N(0, 2 / (k^3 * in_ch)), biases 0, drawn
// in layer order from config.seed. Parameters require grad.
template <typename T>
Model<T> build_model(const ModelConfig& config);

template <typename T>
std::size_t param_count(const Model<T>& model) {
  return model.param_count();
}

// Per-voxel argmax of the logits; equal logits resolve to class 0. The volume
// is expected to be standardized already. No post-processing is applied.
Mask predict_mask(const Model<float>& model, const Volume& volume);
Mask argmax_mask(const Tensor<float>& logits, const Extent3& shape, const Spacing3& spacing);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace ratlesnet
