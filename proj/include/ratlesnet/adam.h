#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ratlesnet/tensor.h"

namespace ratlesnet {

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;

  AdamState() = default;
  // Zero moments shaped like `params`.
  AdamState(const AdamConfig& cfg, std::span<Tensor<float>* const> params);
};

// One bias-corrected Adam update from each parameter's grad buffer. Gradients
// are left in place; the caller zeroes them. Throws StateError when the
// parameters do not match the moment buffers.
void adam_step(std::span<Tensor<float>* const> params, AdamState& state);

}  // namespace ratlesnet
